//! Built-in synthetic dry sources for simulation when no recorded speech
//! is available.
//!
//! `SpeechLike` is a syllabic harmonic signal with gliding pitch, formant
//! shaping and occasional noise-burst "fricatives"; it is sparse in time
//! and frequency the way speech is, which is what masking-based separation
//! relies on.

use rand::Rng;

use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    SpeechLike,
    NoiseBurst,
    AmTone,
    Chirp,
}

/// RMS level of every synthesized signal.
pub const SYNTH_RMS: f64 = 0.05;

pub fn synthesize<T: Scalar, R: Rng + ?Sized>(
    kind: SynthKind,
    rng: &mut R,
    len: usize,
    sample_rate: u32,
) -> Vec<T> {
    let fs = f64::from(sample_rate);
    let x = match kind {
        SynthKind::SpeechLike => speech_like(rng, len, fs),
        SynthKind::NoiseBurst => noise_bursts(rng, len, fs),
        SynthKind::AmTone => am_tone(rng, len, fs),
        SynthKind::Chirp => chirp(rng, len, fs),
    };
    normalize_rms(x).into_iter().map(T::lit).collect()
}

fn normalize_rms(mut x: Vec<f64>) -> Vec<f64> {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    if ms > 0.0 {
        let g = SYNTH_RMS / ms.sqrt();
        x.iter_mut().for_each(|v| *v *= g);
    }
    x
}

/// Raised-cosine onset/offset envelope over `len` samples.
fn syllable_envelope(i: usize, len: usize) -> f64 {
    let ramp = (len / 5).max(1);
    if i < ramp {
        0.5 - 0.5 * (std::f64::consts::PI * i as f64 / ramp as f64).cos()
    } else if i + ramp >= len {
        0.5 - 0.5 * (std::f64::consts::PI * (len - 1 - i) as f64 / ramp as f64).cos()
    } else {
        1.0
    }
}

fn formant_gain(freq: f64, formants: &[(f64, f64)]) -> f64 {
    formants
        .iter()
        .map(|&(f, bw)| (-0.5 * ((freq - f) / bw).powi(2)).exp())
        .sum::<f64>()
        + 0.05
}

/// High-passed white noise (first difference), then a one-pole lowpass.
fn fricative<R: Rng + ?Sized>(rng: &mut R, len: usize, cutoff: f64, fs: f64) -> Vec<f64> {
    let a = (-2.0 * std::f64::consts::PI * cutoff / fs).exp();
    let mut prev = 0.0;
    let mut lp = 0.0;
    (0..len)
        .map(|_| {
            let w: f64 = rng.gen_range(-1.0..1.0);
            let hp = w - prev;
            prev = w;
            lp = (1.0 - a) * hp + a * lp;
            lp
        })
        .collect()
}

fn speech_like<R: Rng + ?Sized>(rng: &mut R, len: usize, fs: f64) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let base_f0: f64 = rng.gen_range(90.0..240.0);
    let nyquist = 0.45 * fs;
    let mut pos = (rng.gen_range(0.0..0.08) * fs) as usize;
    while pos < len {
        let syl = ((rng.gen_range(0.12..0.32)) * fs) as usize;
        let syl = syl.min(len - pos);
        let amp: f64 = rng.gen_range(0.4..1.0);
        if rng.gen_bool(0.2) {
            let cutoff = rng.gen_range(3000.0..7000.0_f64).min(nyquist);
            let noise = fricative(rng, syl, cutoff, fs);
            for (i, v) in noise.into_iter().enumerate() {
                out[pos + i] += 0.6 * amp * v * syllable_envelope(i, syl);
            }
        } else {
            let formants = [
                (rng.gen_range(300.0..900.0), 120.0),
                (rng.gen_range(900.0..2500.0), 200.0),
                (rng.gen_range(2500.0..3800.0), 300.0),
            ];
            let f0_start = base_f0 * rng.gen_range(0.85..1.15);
            let f0_end = base_f0 * rng.gen_range(0.85..1.15);
            let harmonics = (nyquist / (base_f0 * 1.3)).floor() as usize;
            let mut phases: Vec<f64> = (0..harmonics)
                .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                .collect();
            for i in 0..syl {
                let frac = i as f64 / syl as f64;
                let f0 = f0_start + (f0_end - f0_start) * frac;
                let env = amp * syllable_envelope(i, syl);
                let mut s = 0.0;
                for (k, ph) in phases.iter_mut().enumerate() {
                    let f = f0 * (k + 1) as f64;
                    if f >= nyquist {
                        break;
                    }
                    *ph += std::f64::consts::TAU * f / fs;
                    s += formant_gain(f, &formants) / (k + 1) as f64 * ph.sin();
                }
                out[pos + i] += env * s;
            }
        }
        pos += syl + (rng.gen_range(0.03..0.15) * fs) as usize;
    }
    out
}

fn noise_bursts<R: Rng + ?Sized>(rng: &mut R, len: usize, fs: f64) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let mut pos = 0;
    while pos < len {
        let burst = ((rng.gen_range(0.05..0.25) * fs) as usize).min(len - pos);
        let cutoff = rng.gen_range(500.0..6000.0_f64).min(0.45 * fs);
        let a = (-2.0 * std::f64::consts::PI * cutoff / fs).exp();
        let mut lp = 0.0;
        for i in 0..burst {
            let w: f64 = rng.gen_range(-1.0..1.0);
            lp = (1.0 - a) * w + a * lp;
            out[pos + i] = lp * syllable_envelope(i, burst);
        }
        pos += burst + (rng.gen_range(0.02..0.2) * fs) as usize;
    }
    out
}

fn am_tone<R: Rng + ?Sized>(rng: &mut R, len: usize, fs: f64) -> Vec<f64> {
    let f: f64 = rng.gen_range(200.0..3000.0);
    let fm: f64 = rng.gen_range(2.0..8.0);
    let ph: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (0..len)
        .map(|n| {
            let t = n as f64 / fs;
            let env = 0.5 + 0.5 * (std::f64::consts::TAU * fm * t + ph).sin();
            env * (std::f64::consts::TAU * f * t).sin()
        })
        .collect()
}

fn chirp<R: Rng + ?Sized>(rng: &mut R, len: usize, fs: f64) -> Vec<f64> {
    let f_lo: f64 = rng.gen_range(150.0..600.0);
    let f_hi: f64 = rng.gen_range(2000.0..0.45 * fs);
    let dur = len as f64 / fs;
    let rate = (f_hi - f_lo) / dur.max(1e-9);
    (0..len)
        .map(|n| {
            let t = n as f64 / fs;
            (std::f64::consts::TAU * (f_lo * t + 0.5 * rate * t * t)).sin()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_kind_is_finite_nonzero_and_normalized() {
        for kind in [
            SynthKind::SpeechLike,
            SynthKind::NoiseBurst,
            SynthKind::AmTone,
            SynthKind::Chirp,
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let x: Vec<f64> = synthesize(kind, &mut rng, 16000, 16000);
            assert_eq!(x.len(), 16000);
            assert!(x.iter().all(|v| v.is_finite()));
            let rms = (x.iter().map(|v| v * v).sum::<f64>() / 16000.0).sqrt();
            assert!((rms - SYNTH_RMS).abs() < 1e-9, "{kind:?}: {rms}");
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a: Vec<f32> = synthesize(
            SynthKind::SpeechLike,
            &mut ChaCha8Rng::seed_from_u64(1),
            8000,
            16000,
        );
        let b: Vec<f32> = synthesize(
            SynthKind::SpeechLike,
            &mut ChaCha8Rng::seed_from_u64(1),
            8000,
            16000,
        );
        assert_eq!(a, b);
    }

    #[test]
    fn speech_like_has_pauses() {
        let x: Vec<f64> = synthesize(
            SynthKind::SpeechLike,
            &mut ChaCha8Rng::seed_from_u64(3),
            32000,
            16000,
        );
        let quiet = x
            .chunks(160)
            .filter(|c| c.iter().all(|v| v.abs() < 1e-6))
            .count();
        assert!(quiet > 5, "{quiet} silent 10 ms blocks");
    }
}
