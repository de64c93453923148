//! TSNF1 feature files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 5     | magic `TSNF1`                           |
//! | 2     | version (u16, currently 1)              |
//! | 4     | frames T (u32)                          |
//! | 4     | feature dimension D (u32)               |
//! | 4     | layout descriptor length in bytes (u32) |
//! | n     | layout descriptor, UTF-8                |
//! | 4·T·D | payload, f32 row-major                  |

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::atomic_write;
use crate::error::{Error, Result};
use crate::spatial_features::{FeatureLayout, FeatureStack};
use crate::Scalar;

pub const FEATURE_MAGIC: &[u8; 5] = b"TSNF1";
pub const FEATURE_VERSION: u16 = 1;

pub fn write_features<T: Scalar>(path: &Path, stack: &FeatureStack<T>) -> Result<()> {
    let layout = stack.layout.to_string();
    let frames =
        u32::try_from(stack.num_frames()).map_err(|_| Error::invalid("too many frames"))?;
    let dim =
        u32::try_from(stack.dim()).map_err(|_| Error::invalid("feature dimension too large"))?;
    let mut buf = Vec::with_capacity(19 + layout.len() + 4 * stack.data.len());
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&frames.to_le_bytes());
    buf.extend_from_slice(&dim.to_le_bytes());
    buf.extend_from_slice(&(layout.len() as u32).to_le_bytes());
    buf.extend_from_slice(layout.as_bytes());
    for &v in stack.data.iter() {
        buf.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    atomic_write(path, &buf)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, path: &Path, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!("header ends inside {what}"),
        });
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn u32_le(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().expect("4 bytes"))
}

pub fn read_features(path: &Path) -> Result<FeatureStack<f32>> {
    let all = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rest = all.as_slice();
    let magic = take(&mut rest, 5, path, "magic")?;
    if magic != FEATURE_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!("bad magic {:?}", String::from_utf8_lossy(magic)),
        });
    }
    let version = u16::from_le_bytes(take(&mut rest, 2, path, "version")?.try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: u32::from(version),
            supported: u32::from(FEATURE_VERSION),
        });
    }
    let frames = u32_le(take(&mut rest, 4, path, "frame count")?) as usize;
    let dim = u32_le(take(&mut rest, 4, path, "dimension")?) as usize;
    let layout_len = u32_le(take(&mut rest, 4, path, "layout length")?) as usize;
    let layout_bytes = take(&mut rest, layout_len, path, "layout descriptor")?;
    let layout: FeatureLayout = std::str::from_utf8(layout_bytes)
        .map_err(|_| Error::Format {
            path: path.to_path_buf(),
            detail: "layout descriptor is not UTF-8".into(),
        })?
        .parse()
        .map_err(|e: Error| Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
    if layout.width() != dim {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!("layout width {} differs from D = {dim}", layout.width()),
        });
    }
    let expected = 4 * frames as u64 * dim as u64;
    if rest.len() as u64 != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: rest.len() as u64,
        });
    }
    let values = rest
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = Array2::from_shape_vec((frames, dim), values).expect("length checked");
    FeatureStack::new(data, layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stack() -> FeatureStack<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = Array2::from_shape_fn((100, 297), |_| rng.gen_range(-50.0f32..50.0));
        let layout = "lps:33;cosipd:198;af_tgt:33;dpr_tgt:33".parse().unwrap();
        FeatureStack::new(data, layout).unwrap()
    }

    #[test]
    fn round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.tsnf");
        let s = stack();
        write_features(&p, &s).unwrap();
        let back = read_features(&p).unwrap();
        assert_eq!(back.layout, s.layout);
        assert!(back
            .data
            .iter()
            .zip(s.data.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncation_and_magic_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.tsnf");
        write_features(&p, &stack()).unwrap();
        let bytes = std::fs::read(&p).unwrap();

        let t = dir.path().join("t.tsnf");
        std::fs::write(&t, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(read_features(&t), Err(Error::Truncated { .. })));

        let mut bad = bytes.clone();
        bad[..5].copy_from_slice(b"XXXXX");
        std::fs::write(&t, &bad).unwrap();
        assert!(matches!(read_features(&t), Err(Error::Format { .. })));

        let mut v2 = bytes.clone();
        v2[5] = 2;
        std::fs::write(&t, &v2).unwrap();
        assert!(matches!(
            read_features(&t),
            Err(Error::UnsupportedVersion { found: 2, .. })
        ));

        std::fs::write(&t, b"XXXX").unwrap();
        assert!(matches!(read_features(&t), Err(Error::Format { .. })));
    }

    #[test]
    fn header_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.tsnf");
        let s = stack();
        write_features(&p, &s).unwrap();
        let b = std::fs::read(&p).unwrap();
        assert_eq!(&b[..5], b"TSNF1");
        assert_eq!(u16::from_le_bytes([b[5], b[6]]), 1);
        assert_eq!(u32_le(&b[7..11]), 100);
        assert_eq!(u32_le(&b[11..15]), 297);
        let n = u32_le(&b[15..19]) as usize;
        assert_eq!(b.len(), 19 + n + 4 * 100 * 297);
    }
}
