use std::fs;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::temp_path;
use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    Pcm16,
    #[default]
    Float32,
}

/// Decoded WAV contents, `[channel][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavData<T> {
    pub channels: Vec<Vec<T>>,
    pub sample_rate: u32,
    pub encoding: WavEncoding,
}

const PCM16_SCALE: f64 = 32768.0;

/// Writes equal-length channels as one interleaved RIFF/WAVE file.
pub fn write_wav<T: Scalar>(
    path: &Path,
    channels: &[Vec<T>],
    sample_rate: u32,
    encoding: WavEncoding,
) -> Result<()> {
    let first = channels
        .first()
        .ok_or_else(|| Error::invalid(format!("{}: no channels to write", path.display())))?;
    if channels.iter().any(|c| c.len() != first.len()) {
        return Err(Error::invalid(format!(
            "{}: channels differ in length",
            path.display()
        )));
    }
    if channels.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "{}: non-finite samples",
            path.display()
        )));
    }
    let spec = WavSpec {
        channels: u16::try_from(channels.len())
            .map_err(|_| Error::invalid("too many channels for WAV"))?,
        sample_rate,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => SampleFormat::Int,
            WavEncoding::Float32 => SampleFormat::Float,
        },
    };
    let tmp = temp_path(path);
    let wav_err = |e| Error::Wav {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = WavWriter::create(&tmp, spec).map_err(wav_err)?;
    for n in 0..first.len() {
        for ch in channels {
            let v = ch[n].to_f64_lossy();
            match encoding {
                WavEncoding::Pcm16 => {
                    let q = (v * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16;
                    w.write_sample(q).map_err(wav_err)?;
                }
                WavEncoding::Float32 => w.write_sample(v as f32).map_err(wav_err)?,
            }
        }
    }
    w.finalize().map_err(wav_err)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads a PCM16 or float32 WAV. With `expected_rate`, any other sample
/// rate is an error.
pub fn read_wav<T: Scalar>(path: &Path, expected_rate: Option<u32>) -> Result<WavData<T>> {
    let wav_err = |e| Error::Wav {
        path: path.to_path_buf(),
        source: e,
    };
    let reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if let Some(expected) = expected_rate {
        if spec.sample_rate != expected {
            return Err(Error::SampleRateMismatch {
                path: path.to_path_buf(),
                expected,
                found: spec.sample_rate,
            });
        }
    }
    let nch = usize::from(spec.channels);
    let (encoding, interleaved): (WavEncoding, Vec<f64>) =
        match (spec.sample_format, spec.bits_per_sample) {
            (SampleFormat::Int, 16) => (
                WavEncoding::Pcm16,
                reader
                    .into_samples::<i16>()
                    .map(|s| s.map(|v| f64::from(v) / PCM16_SCALE))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(wav_err)?,
            ),
            (SampleFormat::Float, 32) => (
                WavEncoding::Float32,
                reader
                    .into_samples::<f32>()
                    .map(|s| s.map(f64::from))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(wav_err)?,
            ),
            (fmt, bits) => {
                return Err(Error::UnsupportedEncoding {
                    path: path.to_path_buf(),
                    detail: format!("{fmt:?} with {bits} bits per sample"),
                })
            }
        };
    if nch == 0 || interleaved.len() % nch != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: "sample count is not a multiple of the channel count".into(),
        });
    }
    let frames = interleaved.len() / nch;
    let mut channels = vec![Vec::with_capacity(frames); nch];
    for frame in interleaved.chunks_exact(nch) {
        for (ch, &v) in channels.iter_mut().zip(frame) {
            ch.push(T::lit(v));
        }
    }
    Ok(WavData {
        channels,
        sample_rate: spec.sample_rate,
        encoding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_channels(nch: usize, len: usize) -> Vec<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        (0..nch)
            .map(|_| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn float32_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let x = random_channels(6, 16000);
        write_wav(&p, &x, 16000, WavEncoding::Float32).unwrap();
        let back = read_wav::<f32>(&p, Some(16000)).unwrap();
        assert_eq!(back.channels, x);
        assert_eq!(back.encoding, WavEncoding::Float32);
    }

    #[test]
    fn pcm16_round_trip_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let mut x: Vec<Vec<f64>> = random_channels(2, 4000)
            .into_iter()
            .map(|c| c.into_iter().map(f64::from).collect())
            .collect();
        x[0][0] = 1.0;
        x[0][1] = -1.0;
        write_wav(&p, &x, 16000, WavEncoding::Pcm16).unwrap();
        let back = read_wav::<f64>(&p, None).unwrap();
        for (a, b) in back.channels.iter().flatten().zip(x.iter().flatten()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn rate_mismatch_and_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        write_wav(&p, &[vec![0.1f64; 100]], 8000, WavEncoding::Pcm16).unwrap();
        assert!(matches!(
            read_wav::<f64>(&p, Some(16000)),
            Err(Error::SampleRateMismatch {
                expected: 16000,
                found: 8000,
                ..
            })
        ));

        let bytes = std::fs::read(&p).unwrap();
        let t = dir.path().join("trunc.wav");
        std::fs::write(&t, &bytes[..30]).unwrap();
        assert!(read_wav::<f64>(&t, None).is_err());

        let spec = WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let q = dir.path().join("x24.wav");
        let mut w = WavWriter::create(&q, spec).unwrap();
        w.write_sample(5i32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            read_wav::<f64>(&q, None),
            Err(Error::UnsupportedEncoding { .. })
        ));
        assert!(write_wav(&p, &[vec![f64::NAN]], 16000, WavEncoding::Float32).is_err());
    }
}
