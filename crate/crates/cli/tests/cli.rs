use std::path::Path;
use std::process::Command;

use ssk::dataset_io::{read_features, read_manifest};
use ssk::spatial_features::{Condition, FeatureSelection};
use ssk_cli::{
    cmd_evaluate, cmd_features, cmd_separate, cmd_simulate, CliError, Method, RunConfig,
};

fn small(out: &Path, seed: u64) -> RunConfig {
    RunConfig {
        seed,
        num_scenes: 2,
        duration_secs: 0.5,
        out: out.to_path_buf(),
        manifest: Some(out.join("manifest.json")),
        jobs: Some(1),
        ..RunConfig::default()
    }
}

fn ssk(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ssk"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn zero_scenes_give_an_empty_valid_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        num_scenes: 0,
        ..small(dir.path(), 1)
    };
    let s = cmd_simulate(&cfg).unwrap();
    assert_eq!(s.num_scenes, 0);
    let m = read_manifest(&s.manifest, true).unwrap();
    assert!(m.utterances.is_empty());
}

#[test]
fn simulate_is_deterministic_and_prefix_stable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_simulate(&small(a.path(), 3)).unwrap();
    cmd_simulate(&RunConfig {
        num_scenes: 3,
        jobs: Some(2),
        ..small(b.path(), 3)
    })
    .unwrap();
    for f in ["mixture.wav", "image0.wav", "image1.wav", "dry0.wav"] {
        let x = std::fs::read(a.path().join("s00001").join(f)).unwrap();
        let y = std::fs::read(b.path().join("s00001").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let ma = read_manifest(&a.path().join("manifest.json"), true).unwrap();
    let mb = read_manifest(&b.path().join("manifest.json"), true).unwrap();
    assert_eq!(ma.utterances[..], mb.utterances[..2]);
}

#[test]
fn features_are_reproducible_and_sized_by_selection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), 4);
    cmd_simulate(&cfg).unwrap();
    let f1 = dir.path().join("f1");
    let f2 = dir.path().join("f2");
    let files = cmd_features(&RunConfig {
        out: f1.clone(),
        ..cfg.clone()
    })
    .unwrap();
    assert_eq!(files.len(), 4);
    cmd_features(&RunConfig {
        out: f2.clone(),
        ..cfg.clone()
    })
    .unwrap();
    for f in &files {
        let name = f.file_name().unwrap();
        assert_eq!(
            std::fs::read(f).unwrap(),
            std::fs::read(f2.join(name)).unwrap()
        );
    }
    assert_eq!(read_features(&files[0]).unwrap().dim(), 33 + 198 + 33 + 33);

    let f3 = dir.path().join("f3");
    let cos_only = RunConfig {
        out: f3,
        features: FeatureSelection::parse("cosipd", Condition::Tgt).unwrap(),
        ..cfg
    };
    let files = cmd_features(&cos_only).unwrap();
    assert_eq!(read_features(&files[0]).unwrap().dim(), 198);
}

#[test]
fn evaluate_mixture_and_reference_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), 5);
    cmd_simulate(&cfg).unwrap();
    let m = read_manifest(&dir.path().join("manifest.json"), true).unwrap();
    let mix_dir = dir.path().join("mix");
    let ref_dir = dir.path().join("ref");
    std::fs::create_dir_all(&mix_dir).unwrap();
    std::fs::create_dir_all(&ref_dir).unwrap();
    for u in &m.utterances {
        let mix = ssk::dataset_io::read_wav::<f64>(&dir.path().join(&u.mixture), None).unwrap();
        for c in 0..u.num_sources() {
            let name = format!("{}_tgt{c}.wav", u.id);
            let img =
                ssk::dataset_io::read_wav::<f64>(&dir.path().join(&u.images[c]), None).unwrap();
            let enc = ssk::dataset_io::WavEncoding::Float32;
            ssk::dataset_io::write_wav(&mix_dir.join(&name), &mix.channels[..1], 16000, enc)
                .unwrap();
            ssk::dataset_io::write_wav(&ref_dir.join(&name), &img.channels[..1], 16000, enc)
                .unwrap();
        }
    }
    let report = cmd_evaluate(&RunConfig {
        estimates: Some(mix_dir),
        out: dir.path().join("eval_mix"),
        ..cfg.clone()
    })
    .unwrap();
    assert_eq!(report.overall.count, 4);
    assert_eq!(report.overall_mean(), Some(0.0));

    let out = dir.path().join("eval_ref");
    let report = cmd_evaluate(&RunConfig {
        estimates: Some(ref_dir),
        out: out.clone(),
        ..cfg
    })
    .unwrap();
    let recs: Vec<ssk::metrics::EvalRecord> =
        serde_json::from_str(&std::fs::read_to_string(out.join("records.json")).unwrap()).unwrap();
    for r in &recs {
        assert_eq!(r.si_sdr_est, 300.0);
        assert!((r.si_sdri() - (300.0 - r.si_sdr_mix)).abs() < 1e-9);
    }
    assert!(out.join("report.csv").is_file() && out.join("report.json").is_file());
    assert!(report.overall_mean().unwrap() > 250.0);
}

#[test]
fn missing_estimates_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), 6);
    cmd_simulate(&cfg).unwrap();
    let err = cmd_evaluate(&cfg).unwrap_err();
    match err.downcast_ref::<CliError>() {
        Some(CliError::MissingEstimates(p)) => {
            assert_eq!(p.len(), 4);
            assert!(p[0].ends_with("ipsm/s00000_tgt0.wav"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn separate_then_evaluate_each_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), 7);
    cmd_simulate(&cfg).unwrap();
    for method in ["ipsm", "heuristic", "das"] {
        let c = RunConfig {
            method: method.parse::<Method>().unwrap(),
            ..cfg.clone()
        };
        let files = cmd_separate(&c).unwrap();
        assert_eq!(files.len(), 4);
        assert!(files[0].with_extension("json").is_file());
        let r = cmd_evaluate(&c).unwrap();
        assert!(r.overall_mean().unwrap().is_finite());
    }
}

#[test]
fn binary_usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = ssk(&["separate", "--method", "wiener", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown method"));
    let o = ssk(&["simulate", "--num-speakers", "4", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    let o = ssk(&["features", "--features", "lps,bogus", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn binary_simulate_and_missing_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = ssk(&[
        "simulate",
        "--num-scenes",
        "1",
        "--duration-secs",
        "0.25",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("1 scenes"));
    let missing = dir.path().join("nope.json");
    let o = ssk(&[
        "features",
        "--manifest",
        missing.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));
}
