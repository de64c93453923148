use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::atomic_write;
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySpec {
    pub num_mics: usize,
    pub diameter: f64,
}

/// One simulated scene. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub id: String,
    pub mixture: PathBuf,
    pub images: Vec<PathBuf>,
    pub dry: Vec<PathBuf>,
    /// Source azimuths seen from the array center, degrees.
    pub azimuths: Vec<f64>,
    pub t60: f64,
    pub room_dimensions: [f64; 3],
    pub array_center: [f64; 3],
    pub source_positions: Vec<[f64; 3]>,
    pub gains_db: Vec<f64>,
    /// Angle difference between source 0 and its closest other source.
    pub angle_difference: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Utterance {
    pub fn num_sources(&self) -> usize {
        self.azimuths.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub array: ArraySpec,
    pub utterances: Vec<Utterance>,
}

impl Manifest {
    pub fn new(array: ArraySpec) -> Self {
        Self {
            schema_version: MANIFEST_VERSION,
            array,
            utterances: Vec::new(),
        }
    }

    /// Checks per-utterance consistency and that every referenced file
    /// exists below `base_dir`.
    pub fn validate(&self, base_dir: &Path) -> Result<()> {
        for u in &self.utterances {
            let n = u.azimuths.len();
            if u.images.len() != n
                || u.dry.len() != n
                || u.source_positions.len() != n
                || u.gains_db.len() != n
            {
                return Err(Error::Schema {
                    path: base_dir.to_path_buf(),
                    detail: format!(
                        "utterance {}: {n} azimuths but {} images, {} dry, {} positions, {} gains",
                        u.id,
                        u.images.len(),
                        u.dry.len(),
                        u.source_positions.len(),
                        u.gains_db.len()
                    ),
                });
            }
            for p in std::iter::once(&u.mixture).chain(&u.images).chain(&u.dry) {
                let full = base_dir.join(p);
                if !full.is_file() {
                    return Err(Error::MissingFile {
                        path: full,
                        utterance: u.id.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

/// Parses a manifest; with `validate`, also checks that every referenced
/// file exists relative to the manifest's directory.
pub fn read_manifest(path: &Path, validate: bool) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            detail: "missing schema_version".into(),
        })?;
    if version != u64::from(MANIFEST_VERSION) {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: u32::try_from(version).unwrap_or(u32::MAX),
            supported: MANIFEST_VERSION,
        });
    }
    let manifest: Manifest = serde_json::from_value(value).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        detail: format!("schema version {version}: {e}"),
    })?;
    if validate {
        manifest.validate(path.parent().unwrap_or(Path::new(".")))?;
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utterance(id: &str) -> Utterance {
        Utterance {
            id: id.into(),
            mixture: format!("{id}/mix.wav").into(),
            images: vec![format!("{id}/s0.wav").into(), format!("{id}/s1.wav").into()],
            dry: vec![format!("{id}/d0.wav").into(), format!("{id}/d1.wav").into()],
            azimuths: vec![12.5, 250.0],
            t60: 0.31,
            room_dimensions: [5.0, 6.0, 3.0],
            array_center: [2.0, 3.0, 1.5],
            source_positions: vec![[3.0, 3.2, 1.5], [1.0, 1.0, 1.5]],
            gains_db: vec![0.5, -1.5],
            angle_difference: 122.5,
            sample_rate: 16000,
            seed: 99,
        }
    }

    fn manifest() -> Manifest {
        let mut m = Manifest::new(ArraySpec {
            num_mics: 6,
            diameter: 0.07,
        });
        m.utterances.push(utterance("s00000"));
        m
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        let m = manifest();
        write_manifest(&p, &m).unwrap();
        assert_eq!(read_manifest(&p, false).unwrap(), m);
    }

    #[test]
    fn empty_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        let m = Manifest::new(ArraySpec {
            num_mics: 6,
            diameter: 0.07,
        });
        write_manifest(&p, &m).unwrap();
        assert_eq!(read_manifest(&p, true).unwrap().utterances.len(), 0);
    }

    #[test]
    fn missing_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        write_manifest(&p, &manifest()).unwrap();
        match read_manifest(&p, true) {
            Err(Error::MissingFile { path, utterance }) => {
                assert!(path.ends_with("s00000/mix.wav"));
                assert_eq!(utterance, "s00000");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_and_versions_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        let mut v = serde_json::to_value(manifest()).unwrap();
        v["utterances"][0]["extra"] = serde_json::json!(1);
        std::fs::write(&p, v.to_string()).unwrap();
        assert!(matches!(
            read_manifest(&p, false),
            Err(Error::Schema { .. })
        ));

        let mut v = serde_json::to_value(manifest()).unwrap();
        v["schema_version"] = serde_json::json!(7);
        std::fs::write(&p, v.to_string()).unwrap();
        assert!(matches!(
            read_manifest(&p, false),
            Err(Error::UnsupportedVersion { found: 7, .. })
        ));
    }
}
