//! Batch pipeline behind the `ssk` binary: simulate, features, separate,
//! evaluate and the direction-error perturbation sweep.
//!
//! Every command is deterministic for a fixed seed and flag set. Work is
//! spread over utterances on a bounded rayon pool and results are collected
//! in manifest order, so the worker count never changes the output.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ssk::dataset_io::{
    atomic_write, read_manifest, read_wav, write_features, write_manifest, write_wav, ArraySpec,
    Manifest, Utterance, WavEncoding,
};
use ssk::geometry::{min_angle_difference, normalize_azimuth};
use ssk::metrics::{aggregate, si_sdr, EvalRecord, EvalReport, BIN_LABELS};
use ssk::room_sim::{render_mixture, DrySource, SceneSampler};
use ssk::separation::{
    apply_mask, das_beamform, directional_mask, oracle_mask, HeuristicParams, MaskKind,
};
use ssk::spatial_features::{
    angle_feature_from_ipd, dpr_all, ipd, nearest_direction, Condition, FeatureExtractor,
    FeatureSelection,
};
use ssk::spectral::{build_kernel, StftConfig, StftKernel};
use ssk::synth::{synthesize, SynthKind};
use ssk::{DirectionGrid, MicArray, PairSelection};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
pub const DEFAULT_NUM_MICS: usize = 6;

/// Errors the binary reports with a usage exit code or a dedicated message.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{} estimate(s) missing:\n{}", .0.len(), list_paths(.0))]
    MissingEstimates(Vec<PathBuf>),
}

fn list_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| format!("  {}", p.display()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Separation method: an oracle or heuristic mask, or plain delay-and-sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Mask(MaskKind),
    Das,
}

impl Method {
    fn uses_oracle_stft(self) -> bool {
        matches!(self, Method::Mask(k) if k.is_oracle())
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Mask(k) => k.fmt(f),
            Method::Das => f.write_str("das"),
        }
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        if s == "das" {
            return Ok(Method::Das);
        }
        s.parse::<MaskKind>().map(Method::Mask).map_err(|_| {
            CliError::Usage(format!(
                "unknown method {s:?} (expected ibm, irm, ipsm, heuristic or das)"
            ))
        })
    }
}

/// Fully resolved options shared by all subcommands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub num_scenes: usize,
    pub num_speakers: usize,
    pub num_mics: usize,
    pub array_diameter: f64,
    pub sample_rate: u32,
    pub duration_secs: f64,
    /// Mono WAVs to draw dry sources from; synthetic speech-like sources
    /// when absent.
    pub source_dir: Option<PathBuf>,
    pub fft_size: Option<usize>,
    pub win_len: Option<usize>,
    pub hop: Option<usize>,
    pub grid_step: f64,
    pub features: FeatureSelection,
    pub method: Method,
    pub direction_error_deg: f64,
    pub out: PathBuf,
    pub manifest: Option<PathBuf>,
    /// Directory holding `<utt>_tgt<c>.wav` estimates for `evaluate`.
    pub estimates: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_scenes: 50,
            num_speakers: 2,
            num_mics: DEFAULT_NUM_MICS,
            array_diameter: 0.07,
            sample_rate: DEFAULT_SAMPLE_RATE,
            duration_secs: 2.0,
            source_dir: None,
            fft_size: None,
            win_len: None,
            hop: None,
            grid_step: 10.0,
            features: FeatureSelection::default(),
            method: Method::Mask(MaskKind::Ipsm),
            direction_error_deg: 0.0,
            out: PathBuf::from("out"),
            manifest: None,
            estimates: None,
            jobs: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        let usage = |m: String| Err(CliError::Usage(m).into());
        if !(2..=3).contains(&self.num_speakers) {
            return usage(format!(
                "--num-speakers must be 2 or 3, got {}",
                self.num_speakers
            ));
        }
        if !(self.array_diameter > 0.0 && self.array_diameter.is_finite()) {
            return usage(format!(
                "--array-diameter must be positive, got {}",
                self.array_diameter
            ));
        }
        if self.features.dpr && !(self.grid_step > 0.0 && self.grid_step <= 180.0) {
            return usage(format!(
                "dpr features need a grid step in (0, 180], got {}",
                self.grid_step
            ));
        }
        if !(self.duration_secs > 0.0 && self.duration_secs.is_finite()) {
            return usage(format!(
                "--duration-secs must be positive, got {}",
                self.duration_secs
            ));
        }
        if !(self.direction_error_deg >= 0.0 && self.direction_error_deg <= 180.0) {
            return usage(format!(
                "--direction-error-deg must lie in [0, 180], got {}",
                self.direction_error_deg
            ));
        }
        Ok(())
    }

    /// STFT configuration for `method`: 40/20/64 for features, the
    /// heuristic and DAS, 256/128/256 for oracle masks. Explicit flags
    /// override either default.
    pub fn stft_config(&self, method: Method) -> anyhow::Result<StftConfig<f64>> {
        let (win, hop, n) = if method.uses_oracle_stft() {
            (256, 128, 256)
        } else {
            (40, 20, 64)
        };
        let win = self.win_len.unwrap_or(win);
        let hop = self.hop.unwrap_or(hop);
        let n = self.fft_size.unwrap_or(n);
        StftConfig::hann(win, hop, n, self.sample_rate)
            .map_err(|e| CliError::Usage(format!("STFT flags: {e}")).into())
    }

    pub fn grid(&self) -> anyhow::Result<DirectionGrid<f64>> {
        DirectionGrid::uniform(self.grid_step)
            .map_err(|e| CliError::Usage(format!("--grid-step: {e}")).into())
    }

    fn manifest_path(&self) -> anyhow::Result<&Path> {
        self.manifest
            .as_deref()
            .ok_or_else(|| CliError::Usage("--manifest is required".into()).into())
    }

    fn pool(&self) -> anyhow::Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            b = b.num_threads(j.max(1));
        }
        b.build().context("building worker pool")
    }
}

fn array_for(spec: &ArraySpec) -> anyhow::Result<MicArray<f64>> {
    MicArray::circular(spec.num_mics, spec.diameter)
        .with_context(|| format!("array of {} mics, {} m", spec.num_mics, spec.diameter))
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Scene seeds drawn sequentially from the run seed, so scene `i` does not
/// depend on how many scenes follow it.
fn scene_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen()).collect()
}

/// Mono source pool for `simulate`.
struct SourcePool {
    signals: Vec<(PathBuf, Vec<f64>)>,
}

impl SourcePool {
    fn load(dir: &Path, sample_rate: u32, needed: usize) -> anyhow::Result<Self> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("reading source directory {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
            .collect();
        paths.sort();
        if paths.len() < needed {
            bail!(
                "source directory {} holds {} WAV files, {needed} needed per scene",
                dir.display(),
                paths.len()
            );
        }
        let signals = paths
            .into_iter()
            .map(|p| {
                let mut w = read_wav::<f64>(&p, Some(sample_rate))?;
                Ok((p, w.channels.swap_remove(0)))
            })
            .collect::<ssk::Result<_>>()?;
        Ok(Self { signals })
    }

    fn draw(&self, rng: &mut ChaCha8Rng, n: usize, len: usize) -> Vec<Vec<f64>> {
        let picks = rand::seq::index::sample(rng, self.signals.len(), n);
        picks
            .iter()
            .map(|i| {
                let mut x = self.signals[i].1.clone();
                x.resize(len, 0.0);
                x
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub manifest: PathBuf,
    pub num_scenes: usize,
    /// Scene count per angle-difference bin of source 0.
    pub angle_bins: BTreeMap<String, usize>,
}

impl fmt::Display for SimulateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} scenes -> {}",
            self.num_scenes,
            self.manifest.display()
        )?;
        write!(f, "angle difference:")?;
        for label in BIN_LABELS {
            write!(
                f,
                " {label}: {}",
                self.angle_bins.get(label).copied().unwrap_or(0)
            )?;
        }
        Ok(())
    }
}

/// Generates `num_scenes` reverberant scenes under `out` and writes
/// `out/manifest.json`.
pub fn cmd_simulate(cfg: &RunConfig) -> anyhow::Result<SimulateSummary> {
    cfg.validate()?;
    create_dir(&cfg.out)?;
    let fs = cfg.sample_rate;
    let len = (cfg.duration_secs * f64::from(fs)).round() as usize;
    let array_spec = ArraySpec {
        num_mics: cfg.num_mics,
        diameter: cfg.array_diameter,
    };
    let array = array_for(&array_spec)?;
    let pool_sources = cfg
        .source_dir
        .as_deref()
        .map(|d| SourcePool::load(d, fs, cfg.num_speakers))
        .transpose()?;
    let sampler = SceneSampler {
        array_radius: cfg.array_diameter / 2.0,
        ..SceneSampler::default()
    };
    let seeds = scene_seeds(cfg.seed, cfg.num_scenes);
    let utterances: Vec<Utterance> = cfg.pool()?.install(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(i, &scene_seed)| {
                let id = format!("s{i:05}");
                simulate_one(
                    cfg,
                    &id,
                    scene_seed,
                    len,
                    &sampler,
                    &array,
                    pool_sources.as_ref(),
                )
                .with_context(|| format!("scene {id}"))
            })
            .collect::<anyhow::Result<_>>()
    })?;
    let mut manifest = Manifest::new(array_spec);
    manifest.utterances = utterances;
    let path = cfg.out.join("manifest.json");
    write_manifest(&path, &manifest)?;

    let mut angle_bins: BTreeMap<String, usize> =
        BIN_LABELS.iter().map(|l| (l.to_string(), 0)).collect();
    for u in &manifest.utterances {
        let label = BIN_LABELS[ssk::metrics::angle_bin(u.angle_difference)];
        *angle_bins.get_mut(label).unwrap() += 1;
    }
    let summary = SimulateSummary {
        manifest: path,
        num_scenes: manifest.utterances.len(),
        angle_bins,
    };
    log::info!("{summary}");
    Ok(summary)
}

fn simulate_one(
    cfg: &RunConfig,
    id: &str,
    scene_seed: u64,
    len: usize,
    sampler: &SceneSampler<f64>,
    array: &MicArray<f64>,
    sources: Option<&SourcePool>,
) -> anyhow::Result<Utterance> {
    let fs = cfg.sample_rate;
    let n = cfg.num_speakers;
    let spec = sampler.sample(scene_seed, n, fs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
    rng.set_stream(1);
    let dry_signals = match sources {
        Some(pool) => pool.draw(&mut rng, n, len),
        None => (0..n)
            .map(|_| synthesize(SynthKind::SpeechLike, &mut rng, len, fs))
            .collect(),
    };
    let dry: Vec<DrySource<f64>> = dry_signals
        .into_iter()
        .map(|samples| DrySource {
            samples,
            sample_rate: fs,
        })
        .collect();
    let scene = render_mixture(&dry, &spec.room, array, &spec.gains_db)?;

    let dir = cfg.out.join(id);
    create_dir(&dir)?;
    let rel = |name: String| PathBuf::from(id).join(name);
    let mixture = rel("mixture.wav".into());
    write_wav(
        &cfg.out.join(&mixture),
        &scene.mixture,
        fs,
        WavEncoding::Float32,
    )?;
    let mut images = Vec::with_capacity(n);
    let mut dry_paths = Vec::with_capacity(n);
    for c in 0..n {
        let img = rel(format!("image{c}.wav"));
        write_wav(
            &cfg.out.join(&img),
            &scene.images[c],
            fs,
            WavEncoding::Float32,
        )?;
        images.push(img);
        let d = rel(format!("dry{c}.wav"));
        write_wav(
            &cfg.out.join(&d),
            std::slice::from_ref(&scene.dry_sources[c]),
            fs,
            WavEncoding::Float32,
        )?;
        dry_paths.push(d);
    }
    let azimuths = scene.directions.clone();
    let angle_difference = min_angle_difference(azimuths[0], &azimuths[1..])?;
    Ok(Utterance {
        id: id.to_string(),
        mixture,
        images,
        dry: dry_paths,
        azimuths,
        t60: spec.room.t60,
        room_dimensions: spec.room.dimensions,
        array_center: spec.room.array_center,
        source_positions: spec.room.source_positions.clone(),
        gains_db: spec.gains_db,
        angle_difference,
        sample_rate: fs,
        seed: scene_seed,
    })
}

/// Index of the interferer closest in azimuth to `target`.
fn closest_interferer(azimuths: &[f64], target: usize) -> usize {
    (0..azimuths.len())
        .filter(|&c| c != target)
        .min_by(|&a, &b| {
            let da = ssk::geometry::angle_difference(azimuths[target], azimuths[a]);
            let db = ssk::geometry::angle_difference(azimuths[target], azimuths[b]);
            da.total_cmp(&db)
        })
        .expect("at least two sources")
}

fn load_manifest(cfg: &RunConfig) -> anyhow::Result<(Manifest, PathBuf)> {
    let path = cfg.manifest_path()?;
    let manifest = read_manifest(path, true)?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((manifest, base))
}

fn read_channels(path: &Path, fs: u32) -> anyhow::Result<Vec<Vec<f64>>> {
    Ok(read_wav::<f64>(path, Some(fs))?.channels)
}

/// Writes one TSNF1 file per utterance and target, `<out>/<utt>_tgt<c>.tsnf`.
pub fn cmd_features(cfg: &RunConfig) -> anyhow::Result<Vec<PathBuf>> {
    cfg.validate()?;
    let (manifest, base) = load_manifest(cfg)?;
    let array = array_for(&manifest.array)?;
    let pairs = PairSelection::default_six();
    let stft = cfg.stft_config(Method::Mask(MaskKind::DirectionalHeuristic))?;
    let extractor = FeatureExtractor::new(array, pairs, &cfg.grid()?, &stft)?;
    create_dir(&cfg.out)?;
    let written: Vec<Vec<PathBuf>> = cfg.pool()?.install(|| {
        manifest
            .utterances
            .par_iter()
            .map(|u| {
                let mix = read_channels(&base.join(&u.mixture), u.sample_rate)?;
                let spec = extractor.analyze(&mix)?;
                (0..u.num_sources())
                    .map(|c| {
                        let intf = u.azimuths[closest_interferer(&u.azimuths, c)];
                        let stack =
                            extractor.extract(&spec, u.azimuths[c], Some(intf), &cfg.features)?;
                        let path = cfg.out.join(format!("{}_tgt{c}.tsnf", u.id));
                        write_features(&path, &stack)?;
                        Ok(path)
                    })
                    .collect::<anyhow::Result<Vec<_>>>()
                    .with_context(|| format!("utterance {}", u.id))
            })
            .collect::<anyhow::Result<_>>()
    })?;
    Ok(written.into_iter().flatten().collect())
}

/// Metadata written next to every estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSidecar {
    pub utterance: String,
    pub target: usize,
    pub method: String,
    /// Steering azimuth used, after any direction error.
    pub azimuth: Option<f64>,
    pub direction_error_deg: f64,
    pub features: Option<String>,
    pub win_len: usize,
    pub hop: usize,
    pub fft_size: usize,
}

/// Precomputed per-utterance state for directional methods.
struct DirectionalScene {
    spec: ssk::MultichannelSpectrogram<f64>,
    ipds: Vec<ssk::spatial_features::IpdMap<f64>>,
    dpr: Vec<ndarray::Array2<f64>>,
}

struct Separator {
    method: Method,
    kernel: StftKernel<f64>,
    extractor: Option<FeatureExtractor<f64>>,
    features: FeatureSelection,
}

impl Separator {
    fn new(cfg: &RunConfig, method: Method, array: &MicArray<f64>) -> anyhow::Result<Self> {
        let stft = cfg.stft_config(method)?;
        let kernel = build_kernel(&stft)?;
        let extractor = if method == Method::Mask(MaskKind::DirectionalHeuristic) {
            if !(cfg.features.af || cfg.features.dpr) {
                return Err(CliError::Usage(
                    "the heuristic needs af and/or dpr in --features".into(),
                )
                .into());
            }
            Some(FeatureExtractor::new(
                array.clone(),
                PairSelection::default_six(),
                &cfg.grid()?,
                &stft,
            )?)
        } else {
            None
        };
        Ok(Self {
            method,
            kernel,
            extractor,
            features: cfg.features,
        })
    }

    fn prepare(&self, mixture: &[Vec<f64>]) -> anyhow::Result<Option<DirectionalScene>> {
        let Some(ex) = &self.extractor else {
            return Ok(None);
        };
        let spec = ex.analyze(mixture)?;
        let ipds = if self.features.af {
            ipd(&spec, &ex.pairs)?
        } else {
            Vec::new()
        };
        let dpr = if self.features.dpr {
            dpr_all(&spec, &ex.bank)?
        } else {
            Vec::new()
        };
        Ok(Some(DirectionalScene { spec, ipds, dpr }))
    }

    /// Heuristic mask estimate for a target steered at `target_az`, with
    /// the interferer at `intf_az` under the tgt+intf condition.
    fn heuristic(
        &self,
        scene: &DirectionalScene,
        mix_ref: &[f64],
        target_az: f64,
        intf_az: f64,
    ) -> anyhow::Result<Vec<f64>> {
        let ex = self.extractor.as_ref().expect("heuristic has an extractor");
        let sel = &self.features;
        let shape = (scene.spec.num_frames(), scene.spec.num_bins());
        let af = |az: f64| -> anyhow::Result<ndarray::Array2<f64>> {
            if sel.af {
                Ok(angle_feature_from_ipd(
                    &scene.spec,
                    &scene.ipds,
                    az,
                    &ex.array,
                    &ex.pairs,
                    &ex.af_params,
                )?)
            } else {
                Ok(ndarray::Array2::zeros(shape))
            }
        };
        let dpr = |az: f64| {
            if sel.dpr {
                scene.dpr[nearest_direction(ex.bank.grid(), az)].clone()
            } else {
                ndarray::Array2::zeros(shape)
            }
        };
        let af_t = af(target_az)?;
        let dpr_t = dpr(target_az);
        let (af_i, dpr_i) = if sel.condition == Condition::TgtIntf {
            (
                sel.af.then(|| af(intf_az)).transpose()?,
                sel.dpr.then(|| dpr(intf_az)),
            )
        } else {
            (None, None)
        };
        let params = HeuristicParams {
            alpha: if sel.af { 1.0 } else { 0.0 },
            beta: if sel.dpr { 1.0 } else { 0.0 },
        };
        let mask = directional_mask(
            &af_t,
            &dpr_t,
            af_i.as_ref(),
            dpr_i.as_ref(),
            &params,
            self.kernel.config(),
        )?;
        Ok(apply_mask(mix_ref, &mask, &self.kernel)?.estimate)
    }

    fn separate(
        &self,
        u: &Utterance,
        base: &Path,
        array: &MicArray<f64>,
        mixture: &[Vec<f64>],
        scene: Option<&DirectionalScene>,
        target: usize,
        azimuth_offset: f64,
    ) -> anyhow::Result<(Vec<f64>, Option<f64>)> {
        let ref_idx = 0;
        let mix_ref = &mixture[ref_idx];
        let az = normalize_azimuth(u.azimuths[target] + azimuth_offset);
        match self.method {
            Method::Mask(kind) if kind.is_oracle() => {
                let mut target_img = Vec::new();
                let mut others = Vec::new();
                for (c, p) in u.images.iter().enumerate() {
                    let mut ch = read_channels(&base.join(p), u.sample_rate)?;
                    let r = ch.swap_remove(ref_idx);
                    if c == target {
                        target_img = r;
                    } else {
                        others.push(r);
                    }
                }
                let mask = oracle_mask(&target_img, &others, kind, &self.kernel)?;
                Ok((apply_mask(mix_ref, &mask, &self.kernel)?.estimate, None))
            }
            Method::Mask(_) => {
                let intf = u.azimuths[closest_interferer(&u.azimuths, target)];
                let scene = scene.expect("prepared for the heuristic");
                Ok((self.heuristic(scene, mix_ref, az, intf)?, Some(az)))
            }
            Method::Das => {
                let y = das_beamform(mixture, az, array, &self.kernel)?;
                Ok((y.estimate, Some(az)))
            }
        }
    }
}

/// Writes `<out>/<method>/<utt>_tgt<c>.wav` plus a JSON sidecar for every
/// utterance and target.
pub fn cmd_separate(cfg: &RunConfig) -> anyhow::Result<Vec<PathBuf>> {
    cfg.validate()?;
    let (manifest, base) = load_manifest(cfg)?;
    let array = array_for(&manifest.array)?;
    let sep = Separator::new(cfg, cfg.method, &array)?;
    let out_dir = cfg.out.join(cfg.method.to_string());
    create_dir(&out_dir)?;
    let stft = sep.kernel.config().clone();
    let written: Vec<Vec<PathBuf>> = cfg.pool()?.install(|| {
        manifest
            .utterances
            .par_iter()
            .map(|u| {
                separate_utterance(cfg, &sep, &array, u, &base, &out_dir, &stft)
                    .with_context(|| format!("utterance {}", u.id))
            })
            .collect::<anyhow::Result<_>>()
    })?;
    Ok(written.into_iter().flatten().collect())
}

fn separate_utterance(
    cfg: &RunConfig,
    sep: &Separator,
    array: &MicArray<f64>,
    u: &Utterance,
    base: &Path,
    out_dir: &Path,
    stft: &StftConfig<f64>,
) -> anyhow::Result<Vec<PathBuf>> {
    let mixture = read_channels(&base.join(&u.mixture), u.sample_rate)?;
    if mixture.len() != array.num_mics() {
        bail!(
            "{} has {} channels, the manifest array {}",
            u.mixture.display(),
            mixture.len(),
            array.num_mics()
        );
    }
    let scene = sep.prepare(&mixture)?;
    let mut paths = Vec::new();
    for c in 0..u.num_sources() {
        let (est, az) = sep.separate(
            u,
            base,
            array,
            &mixture,
            scene.as_ref(),
            c,
            cfg.direction_error_deg,
        )?;
        let wav = out_dir.join(format!("{}_tgt{c}.wav", u.id));
        write_wav(&wav, &[est], u.sample_rate, WavEncoding::Float32)?;
        let sidecar = EstimateSidecar {
            utterance: u.id.clone(),
            target: c,
            method: sep.method.to_string(),
            azimuth: az,
            direction_error_deg: if az.is_some() {
                cfg.direction_error_deg
            } else {
                0.0
            },
            features: (sep.method == Method::Mask(MaskKind::DirectionalHeuristic))
                .then(|| feature_label(&cfg.features)),
            win_len: stft.kernel_length(),
            hop: stft.hop(),
            fft_size: stft.fft_size(),
        };
        let json = serde_json::to_string_pretty(&sidecar)?;
        atomic_write(&wav.with_extension("json"), json.as_bytes())?;
        paths.push(wav);
    }
    Ok(paths)
}

fn feature_label(sel: &FeatureSelection) -> String {
    let names = [
        (sel.lps, "lps"),
        (sel.cosipd, "cosipd"),
        (sel.sinipd, "sinipd"),
        (sel.af, "af"),
        (sel.dpr, "dpr"),
    ];
    let list: Vec<&str> = names
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
    format!("{} ({})", list.join(","), sel.condition)
}

/// Reference-channel target image, mixture and angle difference for one
/// utterance and target.
fn references(
    u: &Utterance,
    base: &Path,
    target: usize,
) -> anyhow::Result<(Vec<f64>, Vec<f64>, f64)> {
    let mut img = read_channels(&base.join(&u.images[target]), u.sample_rate)?;
    let mut mix = read_channels(&base.join(&u.mixture), u.sample_rate)?;
    let others: Vec<f64> = (0..u.num_sources())
        .filter(|&c| c != target)
        .map(|c| u.azimuths[c])
        .collect();
    let ad = min_angle_difference(u.azimuths[target], &others)?;
    Ok((img.swap_remove(0), mix.swap_remove(0), ad))
}

fn record(
    u: &Utterance,
    target: usize,
    estimate: &[f64],
    reference: &[f64],
    mixture: &[f64],
    ad: f64,
    method: &str,
) -> anyhow::Result<EvalRecord> {
    let n = reference.len();
    if estimate.len() != n {
        bail!(
            "estimate for {} target {target} has {} samples, reference {n}",
            u.id,
            estimate.len()
        );
    }
    Ok(EvalRecord {
        utterance: format!("{}_tgt{target}", u.id),
        target_azimuth: u.azimuths[target],
        angle_difference: ad,
        si_sdr_est: si_sdr(estimate, reference)?,
        si_sdr_mix: si_sdr(mixture, reference)?,
        method: method.to_string(),
    })
}

/// Scores `<estimates>/<utt>_tgt<c>.wav` against the reverberant target
/// images and writes `report.json`, `report.csv` and `records.json` to
/// `out`.
pub fn cmd_evaluate(cfg: &RunConfig) -> anyhow::Result<EvalReport> {
    let (manifest, base) = load_manifest(cfg)?;
    let est_dir = cfg
        .estimates
        .clone()
        .unwrap_or_else(|| cfg.out.join(cfg.method.to_string()));
    let est_dir = est_dir.as_path();
    let jobs: Vec<(&Utterance, usize, PathBuf)> = manifest
        .utterances
        .iter()
        .flat_map(|u| {
            (0..u.num_sources()).map(move |c| (u, c, est_dir.join(format!("{}_tgt{c}.wav", u.id))))
        })
        .collect();
    let missing: Vec<PathBuf> = jobs
        .iter()
        .filter(|(_, _, p)| !p.is_file())
        .map(|(_, _, p)| p.clone())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingEstimates(missing).into());
    }
    let method = cfg.method.to_string();
    let records: Vec<EvalRecord> = cfg.pool()?.install(|| {
        jobs.par_iter()
            .map(|(u, c, p)| {
                let (reference, mix, ad) = references(u, &base, *c)?;
                let mut est = read_channels(p, u.sample_rate)?;
                record(u, *c, &est.swap_remove(0), &reference, &mix, ad, &method)
                    .with_context(|| format!("{}", p.display()))
            })
            .collect::<anyhow::Result<_>>()
    })?;
    let report = aggregate(&records);
    create_dir(&cfg.out)?;
    atomic_write(&cfg.out.join("report.json"), report.to_json().as_bytes())?;
    atomic_write(&cfg.out.join("report.csv"), report.to_csv().as_bytes())?;
    let recs = serde_json::to_string_pretty(&records)?;
    atomic_write(&cfg.out.join("records.json"), recs.as_bytes())?;
    Ok(report)
}

pub const PERTURB_NOTE: &str = "single-target methods have no permutation freedom; \
     the <15 bin is not comparable with best-permutation two-output scores";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbRow {
    pub variant: String,
    pub error_deg: f64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbReport {
    pub condition: String,
    pub rows: Vec<PerturbRow>,
    pub note: String,
}

impl PerturbReport {
    pub fn row(&self, variant: &str, error_deg: f64) -> Option<&PerturbRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.error_deg == error_deg)
    }

    /// Mean SI-SDRi over all records with angle difference at least 15
    /// degrees.
    pub fn mean_above_15(&self, variant: &str, error_deg: f64) -> Option<f64> {
        let r = self.row(variant, error_deg)?;
        let (sum, n) = r.report.bins[1..]
            .iter()
            .filter_map(|b| b.mean_si_sdri.map(|m| (m * b.count as f64, b.count)))
            .fold((0.0, 0), |(s, n), (x, c)| (s + x, n + c));
        (n > 0).then(|| sum / n as f64)
    }

    /// `variant,error_deg,bin,count,mean_si_sdri`, then the footnote as a
    /// `#` comment line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,error_deg,bin,count,mean_si_sdri\n");
        for r in &self.rows {
            for b in r
                .report
                .bins
                .iter()
                .chain(std::iter::once(&r.report.overall))
            {
                let mean = b
                    .mean_si_sdri
                    .map(|m| format!("{m:.6}"))
                    .unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.variant, r.error_deg, b.bin, b.count, mean
                ));
            }
        }
        out.push_str(&format!("# {PERTURB_NOTE}\n"));
        out
    }
}

pub const PERTURB_VARIANTS: [&str; 2] = ["af", "af+dpr"];

/// Direction-error sweep of the heuristic mask for the af and af+dpr
/// variants: errors 0, 1, ... up to `direction_error_deg` (10 when zero),
/// with one random sign per utterance drawn from a dedicated seed stream.
/// Writes `perturb.json` and `perturb.csv` to `out`.
pub fn cmd_perturb(cfg: &RunConfig) -> anyhow::Result<PerturbReport> {
    cfg.validate()?;
    let (manifest, base) = load_manifest(cfg)?;
    let array = array_for(&manifest.array)?;
    let max_err = if cfg.direction_error_deg > 0.0 {
        cfg.direction_error_deg
    } else {
        10.0
    };
    let errors: Vec<f64> = (0..=max_err.floor() as usize).map(|e| e as f64).collect();
    let mut sign_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sign_rng.set_stream(0x5157);
    let signs: Vec<f64> = manifest
        .utterances
        .iter()
        .map(|_| if sign_rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();

    let heuristic = Method::Mask(MaskKind::DirectionalHeuristic);
    let separators: Vec<Separator> = PERTURB_VARIANTS
        .iter()
        .map(|v| {
            let features = FeatureSelection {
                af: true,
                dpr: *v == "af+dpr",
                ..FeatureSelection::parse("af", cfg.features.condition).expect("static list")
            };
            Separator::new(
                &RunConfig {
                    features,
                    ..cfg.clone()
                },
                heuristic,
                &array,
            )
        })
        .collect::<anyhow::Result<_>>()?;

    // [utterance] -> [variant][error] -> records
    let per_utt: Vec<Vec<Vec<Vec<EvalRecord>>>> = cfg.pool()?.install(|| {
        manifest
            .utterances
            .par_iter()
            .zip(&signs)
            .map(|(u, &sign)| {
                perturb_utterance(u, &base, &separators, &errors, sign)
                    .with_context(|| format!("utterance {}", u.id))
            })
            .collect::<anyhow::Result<_>>()
    })?;

    let mut rows = Vec::new();
    for (v, name) in PERTURB_VARIANTS.iter().enumerate() {
        for (e, &err) in errors.iter().enumerate() {
            let recs: Vec<EvalRecord> = per_utt.iter().flat_map(|u| u[v][e].clone()).collect();
            rows.push(PerturbRow {
                variant: name.to_string(),
                error_deg: err,
                report: aggregate(&recs),
            });
        }
    }
    let report = PerturbReport {
        condition: cfg.features.condition.to_string(),
        rows,
        note: PERTURB_NOTE.to_string(),
    };
    create_dir(&cfg.out)?;
    let json = serde_json::to_string_pretty(&report)?;
    atomic_write(&cfg.out.join("perturb.json"), json.as_bytes())?;
    atomic_write(&cfg.out.join("perturb.csv"), report.to_csv().as_bytes())?;
    Ok(report)
}

fn perturb_utterance(
    u: &Utterance,
    base: &Path,
    separators: &[Separator],
    errors: &[f64],
    sign: f64,
) -> anyhow::Result<Vec<Vec<Vec<EvalRecord>>>> {
    let mixture = read_channels(&base.join(&u.mixture), u.sample_rate)?;
    let refs: Vec<_> = (0..u.num_sources())
        .map(|c| references(u, base, c))
        .collect::<anyhow::Result<_>>()?;
    separators
        .iter()
        .map(|sep| {
            let scene = sep
                .prepare(&mixture)?
                .ok_or_else(|| anyhow!("no features"))?;
            errors
                .iter()
                .map(|&err| {
                    (0..u.num_sources())
                        .map(|c| {
                            let (reference, mix, ad) = &refs[c];
                            let az = normalize_azimuth(u.azimuths[c] + sign * err);
                            let intf = u.azimuths[closest_interferer(&u.azimuths, c)];
                            let est = sep.heuristic(&scene, &mixture[0], az, intf)?;
                            let label = format!("heuristic-{}", feature_label(&sep.features));
                            record(u, c, &est, reference, mix, *ad, &label)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}
