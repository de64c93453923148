//! Persistence: multichannel WAV, JSON scene manifests and TSNF1 feature
//! tensors. Writers go through a temporary file and a rename so readers
//! never observe partial output.

mod features;
mod manifest;
mod wav;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub use features::{read_features, write_features, FEATURE_MAGIC, FEATURE_VERSION};
pub use manifest::{
    read_manifest, write_manifest, ArraySpec, Manifest, Utterance, MANIFEST_VERSION,
};
pub use wav::{read_wav, write_wav, WavData, WavEncoding};

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// Writes `bytes` to `path` atomically.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_path(path);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
