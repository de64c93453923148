//! Short-time Fourier analysis written as a bank of real and imaginary
//! convolution kernels, plus weighted overlap-add synthesis and log power
//! spectra.
//!
//! Frame `t` covers samples `[t * hop, t * hop + L)` and only fully
//! interior frames are produced (no boundary padding). Band `m` of frame
//! `t` is `sum_k x[t * hop + k] * w[k] * exp(-2πi k m / N)`: the frame-local
//! DFT of the windowed, zero-padded frame. The constant per-frame phase
//! factor of the global-time STFT is dropped; it has unit modulus and
//! cancels in every phase difference.

use ndarray::Array2;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::Scalar;

/// Floor added to the power in [`lps`].
pub const LPS_FLOOR: f64 = 1e-12;

const COLA_TOLERANCE: f64 = 1e-6;
const SYNTHESIS_NORM_FLOOR: f64 = 1e-10;

/// Periodic Hann window of length `len`.
pub fn hann_periodic<T: Scalar>(len: usize) -> Vec<T> {
    let n = T::from_usize_lossy(len);
    (0..len)
        .map(|k| {
            let x = T::TAU() * T::from_usize_lossy(k) / n;
            T::lit(0.5) - T::lit(0.5) * x.cos()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig<T> {
    window: Vec<T>,
    fft_size: usize,
    hop: usize,
    sample_rate: u32,
}

impl<T: Scalar> StftConfig<T> {
    /// Checks the structural invariants (`0 < hop <= L <= N`, finite
    /// window). Constant-overlap-add is checked by [`build_kernel`].
    pub fn new(window: Vec<T>, fft_size: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        let len = window.len();
        if len == 0 {
            return Err(Error::Config("analysis window is empty".into()));
        }
        if hop == 0 || hop > len {
            return Err(Error::Config(format!(
                "hop {hop} must be in 1..={len} (kernel length)"
            )));
        }
        if fft_size < len {
            return Err(Error::Config(format!(
                "FFT size {fft_size} shorter than kernel length {len}"
            )));
        }
        if window.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("window has non-finite values".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        Ok(Self {
            window,
            fft_size,
            hop,
            sample_rate,
        })
    }

    /// Periodic Hann window of `win_len` samples with the given hop and FFT
    /// size.
    pub fn hann(win_len: usize, hop: usize, fft_size: usize, sample_rate: u32) -> Result<Self> {
        Self::new(hann_periodic(win_len), fft_size, hop, sample_rate)
    }

    /// 40-sample Hann kernel, 20-sample hop, 64-point DFT (33 bands).
    pub fn feature_default(sample_rate: u32) -> Self {
        Self::hann(40, 20, 64, sample_rate).expect("default feature config")
    }

    /// 256-point Hann window with 50% overlap, used for oracle masks.
    pub fn oracle_default(sample_rate: u32) -> Self {
        Self::hann(256, 128, 256, sample_rate).expect("default oracle config")
    }

    pub fn window(&self) -> &[T] {
        &self.window
    }

    pub fn kernel_length(&self) -> usize {
        self.window.len()
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of fully interior frames for a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.kernel_length() {
            0
        } else {
            (len - self.kernel_length()) / self.hop + 1
        }
    }

    /// Largest relative deviation of `sum_k w[n - k * hop]` from its mean
    /// over one hop period.
    pub fn cola_deviation(&self) -> T {
        let sums: Vec<T> = (0..self.hop)
            .map(|n| self.window.iter().skip(n).step_by(self.hop).copied().sum())
            .collect();
        let mean = sums.iter().copied().sum::<T>() / T::from_usize_lossy(sums.len());
        if mean == T::zero() {
            return T::infinity();
        }
        sums.iter()
            .map(|&s| ((s - mean) / mean).abs())
            .fold(T::zero(), T::max)
    }
}

/// Real and imaginary analysis kernels, `bins x kernel_length` each.
#[derive(Debug, Clone)]
pub struct StftKernel<T> {
    real: Array2<T>,
    imag: Array2<T>,
    // unwindowed cos/sin tables, reused for synthesis
    cos: Array2<T>,
    sin: Array2<T>,
    config: StftConfig<T>,
}

impl<T: Scalar> StftKernel<T> {
    pub fn real(&self) -> &Array2<T> {
        &self.real
    }

    pub fn imag(&self) -> &Array2<T> {
        &self.imag
    }

    pub fn config(&self) -> &StftConfig<T> {
        &self.config
    }

    pub fn num_bins(&self) -> usize {
        self.real.nrows()
    }
}

/// Builds `K_real[m][k] = w[k] cos(2π k m / N)` and
/// `K_imag[m][k] = -w[k] sin(2π k m / N)`.
pub fn build_kernel<T: Scalar>(cfg: &StftConfig<T>) -> Result<StftKernel<T>> {
    let dev = cfg.cola_deviation();
    if !(dev <= T::lit(COLA_TOLERANCE)) {
        return Err(Error::Config(format!(
            "window violates constant overlap-add at hop {} (relative deviation {dev})",
            cfg.hop
        )));
    }
    let bins = cfg.num_bins();
    let len = cfg.kernel_length();
    let n = cfg.fft_size;
    let mut cos = Array2::zeros((bins, len));
    let mut sin = Array2::zeros((bins, len));
    for m in 0..bins {
        for k in 0..len {
            // reduce k*m mod N before converting so the angle stays small
            let arg = T::TAU() * T::from_usize_lossy((k * m) % n) / T::from_usize_lossy(n);
            cos[[m, k]] = arg.cos();
            sin[[m, k]] = arg.sin();
        }
    }
    let w = ndarray::ArrayView1::from(cfg.window.as_slice());
    let real = &cos * &w;
    let imag = -(&sin * &w);
    Ok(StftKernel {
        real,
        imag,
        cos,
        sin,
        config: cfg.clone(),
    })
}

/// `frames x bins` complex spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram<T> {
    data: Array2<Complex<T>>,
    config: StftConfig<T>,
}

impl<T: Scalar> ComplexSpectrogram<T> {
    pub fn new(data: Array2<Complex<T>>, config: StftConfig<T>) -> Result<Self> {
        if data.ncols() != config.num_bins() {
            return Err(Error::invalid(format!(
                "spectrogram has {} bins, config expects {}",
                data.ncols(),
                config.num_bins()
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::invalid("spectrogram contains non-finite values"));
        }
        Ok(Self { data, config })
    }

    pub fn data(&self) -> &Array2<Complex<T>> {
        &self.data
    }

    pub fn config(&self) -> &StftConfig<T> {
        &self.config
    }

    pub fn num_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.data.ncols()
    }

    /// Elementwise product with a real `frames x bins` gain map.
    pub fn masked(&self, gains: &Array2<T>) -> Result<Self> {
        if gains.dim() != self.data.dim() {
            return Err(Error::invalid(format!(
                "mask shape {:?} does not match spectrogram {:?}",
                gains.dim(),
                self.data.dim()
            )));
        }
        let data = ndarray::Zip::from(&self.data)
            .and(gains)
            .map_collect(|&y, &g| y * g);
        Ok(Self {
            data,
            config: self.config.clone(),
        })
    }

    pub fn magnitude(&self) -> Array2<T> {
        self.data.mapv(|c| c.norm())
    }
}

/// Convolves `signal` with the kernel bank at stride `hop`.
pub fn stft<T: Scalar>(signal: &[T], kernel: &StftKernel<T>) -> Result<ComplexSpectrogram<T>> {
    let cfg = &kernel.config;
    let len = cfg.kernel_length();
    if signal.len() < len {
        return Err(Error::invalid(format!(
            "signal of {} samples is shorter than one {len}-sample frame",
            signal.len()
        )));
    }
    let frames = cfg.num_frames(signal.len());
    let bins = kernel.num_bins();
    let mut data = Array2::from_elem((frames, bins), Complex::new(T::zero(), T::zero()));
    for (t, mut row) in data.outer_iter_mut().enumerate() {
        let frame = &signal[t * cfg.hop..t * cfg.hop + len];
        for m in 0..bins {
            let kr = kernel.real.row(m);
            let ki = kernel.imag.row(m);
            let mut re = T::zero();
            let mut im = T::zero();
            for k in 0..len {
                re += frame[k] * kr[k];
                im += frame[k] * ki[k];
            }
            row[m] = Complex::new(re, im);
        }
    }
    Ok(ComplexSpectrogram {
        data,
        config: cfg.clone(),
    })
}

/// Weighted overlap-add inverse with the analysis window reused for
/// synthesis and pointwise `sum w^2` normalisation. Returns
/// `(frames - 1) * hop + L` samples; samples not covered by any non-zero
/// window weight are zero.
pub fn istft<T: Scalar>(spec: &ComplexSpectrogram<T>, kernel: &StftKernel<T>) -> Result<Vec<T>> {
    let cfg = &kernel.config;
    if spec.config != *cfg {
        return Err(Error::invalid(
            "spectrogram was produced with a different STFT configuration",
        ));
    }
    let frames = spec.num_frames();
    if frames == 0 {
        return Ok(Vec::new());
    }
    let len = cfg.kernel_length();
    let n = cfg.fft_size;
    let bins = kernel.num_bins();
    let out_len = (frames - 1) * cfg.hop + len;
    let mut out = vec![T::zero(); out_len];
    let mut norm = vec![T::zero(); out_len];
    let inv_n = T::one() / T::from_usize_lossy(n);
    let has_nyquist = n % 2 == 0;
    let mut frame = vec![T::zero(); len];
    for (t, row) in spec.data.outer_iter().enumerate() {
        frame.iter_mut().for_each(|v| *v = T::zero());
        for m in 0..bins {
            let y = row[m];
            // real inverse DFT: edge bins counted once, the rest twice
            let weight = if m == 0 || (has_nyquist && m == n / 2) {
                inv_n
            } else {
                inv_n + inv_n
            };
            let c = kernel.cos.row(m);
            let s = kernel.sin.row(m);
            for k in 0..len {
                frame[k] += weight * (y.re * c[k] - y.im * s[k]);
            }
        }
        let start = t * cfg.hop;
        for k in 0..len {
            let w = cfg.window[k];
            out[start + k] += w * frame[k];
            norm[start + k] += w * w;
        }
    }
    // Partially covered edge samples are divided by the steady-state
    // minimum instead of their own tiny window sum, which would amplify
    // whatever a mask left there by up to 1/w.
    let floor = steady_state_min_norm(cfg).max(T::lit(SYNTHESIS_NORM_FLOOR));
    for (o, &z) in out.iter_mut().zip(&norm) {
        *o /= z.max(floor);
    }
    Ok(out)
}

/// Smallest `sum_t w[n - t*hop]^2` over samples covered by every
/// overlapping frame.
fn steady_state_min_norm<T: Scalar>(cfg: &StftConfig<T>) -> T {
    let len = cfg.window.len();
    (0..cfg.hop)
        .map(|k| {
            (k..len)
                .step_by(cfg.hop)
                .map(|j| cfg.window[j] * cfg.window[j])
                .sum::<T>()
        })
        .fold(T::infinity(), T::min)
}

/// `10 log10(re^2 + im^2 + 1e-12)` per bin, in dB.
pub fn lps<T: Scalar>(spec: &ComplexSpectrogram<T>) -> Array2<T> {
    let floor = T::lit(LPS_FLOOR);
    spec.data
        .mapv(|c| T::lit(10.0) * (c.re * c.re + c.im * c.im + floor).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Naive zero-padded DFT of the windowed frame.
    fn dft_frame(frame: &[f64], window: &[f64], n: usize) -> Vec<Complex<f64>> {
        (0..n / 2 + 1)
            .map(|m| {
                let mut acc = Complex::new(0.0, 0.0);
                for (k, (&x, &w)) in frame.iter().zip(window).enumerate() {
                    let a = -2.0 * std::f64::consts::PI * (k * m) as f64 / n as f64;
                    acc += Complex::new(a.cos(), a.sin()) * (x * w);
                }
                acc
            })
            .collect()
    }

    #[test]
    fn default_kernel_shape_and_dc_row() {
        let cfg = StftConfig::<f64>::feature_default(16000);
        let k = build_kernel(&cfg).unwrap();
        assert_eq!(k.real().dim(), (33, 40));
        assert_eq!(k.imag().dim(), (33, 40));
        for t in 0..40 {
            assert_eq!(k.real()[[0, t]], cfg.window()[t]);
            assert_eq!(k.imag()[[0, t]], 0.0);
        }
    }

    #[test]
    fn kernel_row_energy_matches_window_energy() {
        let cfg = StftConfig::<f64>::feature_default(16000);
        let k = build_kernel(&cfg).unwrap();
        let w2: f64 = cfg.window().iter().map(|w| w * w).sum();
        for m in 1..32 {
            let e: f64 = (0..40)
                .map(|t| k.real()[[m, t]].powi(2) + k.imag()[[m, t]].powi(2))
                .sum();
            assert_abs_diff_eq!(e, w2, epsilon = 1e-12);
        }
    }

    #[test]
    fn cola_violation_is_config_error() {
        // Hann at 3/4 hop does not overlap-add to a constant
        let cfg = StftConfig::<f64>::hann(40, 30, 64, 16000).unwrap();
        assert!(matches!(build_kernel(&cfg), Err(Error::Config(_))));
        assert!(StftConfig::<f64>::hann(40, 41, 64, 16000).is_err());
        assert!(StftConfig::<f64>::hann(40, 20, 32, 16000).is_err());
        assert!(StftConfig::<f64>::hann(40, 0, 64, 16000).is_err());
    }

    #[test]
    fn tone_peaks_at_its_bin() {
        let cfg = StftConfig::<f64>::new(vec![1.0; 64], 64, 64, 16000).unwrap();
        let k = build_kernel(&cfg).unwrap();
        let m0 = 5;
        let x: Vec<f64> = (0..64 * 20)
            .map(|n| (2.0 * std::f64::consts::PI * m0 as f64 * n as f64 / 64.0).cos())
            .collect();
        let s = stft(&x, &k).unwrap();
        let mag = s.magnitude();
        for row in mag.outer_iter() {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, m0);
        }
    }

    #[test]
    fn matches_naive_dft() {
        let cfg = StftConfig::<f64>::feature_default(16000);
        let k = build_kernel(&cfg).unwrap();
        let x = noise(4000, 3);
        let s = stft(&x, &k).unwrap();
        for t in 0..s.num_frames() {
            let want = dft_frame(&x[t * 20..t * 20 + 40], cfg.window(), 64);
            for m in 0..33 {
                let got = s.data()[[t, m]];
                assert!((got - want[m]).norm() <= 1e-9 * (1.0 + want[m].norm()));
            }
        }
    }

    #[test]
    fn zero_signal_and_short_signal() {
        let cfg = StftConfig::<f64>::feature_default(16000);
        let k = build_kernel(&cfg).unwrap();
        let s = stft(&vec![0.0; 400], &k).unwrap();
        assert!(s.data().iter().all(|c| c.norm() == 0.0));
        assert!(istft(&s, &k).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(
            stft(&vec![0.0; 39], &k),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn round_trip_interior_and_unit_mask() {
        let cfg = StftConfig::<f64>::feature_default(16000);
        let k = build_kernel(&cfg).unwrap();
        let x = noise(16000, 11);
        let s = stft(&x, &k).unwrap();
        let y = istft(&s, &k).unwrap();
        let ones = Array2::from_elem(s.data().dim(), 1.0);
        let y1 = istft(&s.masked(&ones).unwrap(), &k).unwrap();
        assert_eq!(y, y1);
        let mut err = 0.0;
        let mut sig = 0.0;
        for n in 40..y.len() - 40 {
            err += (y[n] - x[n]).powi(2);
            sig += x[n] * x[n];
        }
        assert!((err / sig).sqrt() < 1e-6);
    }

    #[test]
    fn istft_rejects_foreign_config() {
        let a = build_kernel(&StftConfig::<f64>::feature_default(16000)).unwrap();
        let b = build_kernel(&StftConfig::<f64>::oracle_default(16000)).unwrap();
        let s = stft(&noise(1000, 1), &a).unwrap();
        assert!(istft(&s, &b).is_err());
    }

    #[test]
    fn lps_values() {
        let cfg = StftConfig::<f64>::new(vec![1.0; 2], 2, 2, 16000).unwrap();
        let data = Array2::from_shape_vec(
            (1, 2),
            vec![Complex::new(0.6, 0.8), Complex::new(0.0, 10.0)],
        )
        .unwrap();
        let s = ComplexSpectrogram::new(data, cfg.clone()).unwrap();
        let l = lps(&s);
        assert!(l[[0, 0]].abs() < 1e-10);
        assert_abs_diff_eq!(l[[0, 1]], 20.0, epsilon = 1e-10);
        let zero = ComplexSpectrogram::new(Array2::from_elem((1, 2), Complex::new(0.0, 0.0)), cfg)
            .unwrap();
        assert_abs_diff_eq!(lps(&zero)[[0, 0]], -120.0, epsilon = 1e-9);
    }

    #[test]
    fn linearity_and_real_dc() {
        let k = build_kernel(&StftConfig::<f64>::feature_default(16000)).unwrap();
        let x = noise(2000, 5);
        let y = noise(2000, 6);
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 1.5 * a - 0.25 * b).collect();
        let sx = stft(&x, &k).unwrap();
        let sy = stft(&y, &k).unwrap();
        let sz = stft(&z, &k).unwrap();
        for ((a, b), c) in sx.data().iter().zip(sy.data()).zip(sz.data()) {
            assert!((a * 1.5 - b * 0.25 - c).norm() < 1e-12);
        }
        assert!(sx.data().column(0).iter().all(|c| c.im == 0.0));
    }

    #[test]
    fn parseval_rectangular_hop_equals_length() {
        let n = 64;
        let cfg = StftConfig::<f64>::new(vec![1.0; n], n, n, 16000).unwrap();
        let k = build_kernel(&cfg).unwrap();
        let x = noise(n * 10, 9);
        let s = stft(&x, &k).unwrap();
        for (t, row) in s.data().outer_iter().enumerate() {
            let time: f64 = x[t * n..(t + 1) * n].iter().map(|v| v * v).sum();
            let mut freq = row[0].norm_sqr() + row[n / 2].norm_sqr();
            for m in 1..n / 2 {
                freq += 2.0 * row[m].norm_sqr();
            }
            freq /= n as f64;
            assert!(((time - freq) / time).abs() < 1e-6);
        }
    }

    #[test]
    fn f32_round_trip() {
        let k = build_kernel(&StftConfig::<f32>::feature_default(16000)).unwrap();
        let x: Vec<f32> = noise(3000, 2).into_iter().map(|v| v as f32).collect();
        let y = istft(&stft(&x, &k).unwrap(), &k).unwrap();
        for n in 40..y.len() - 40 {
            assert!((y[n] - x[n]).abs() < 1e-4);
        }
    }
}
