//! Shoebox room impulse responses by the image method, and reverberant
//! multi-speaker mixture rendering.
//!
//! Walls share one frequency-independent reflection coefficient obtained
//! by inverting Eyring's reverberation formula for the requested T60. Each
//! image contributes `beta^k / (4π d)` at delay `d / c`, placed with a
//! Hann-windowed sinc spanning ±4 samples.

use std::sync::Arc;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::{azimuth_between, MicArray, Point3};
use crate::Scalar;

/// Half-width, in samples, of the fractional-delay interpolation kernel.
pub const SINC_HALF_WIDTH: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct RoomConfig<T> {
    /// Length, width and height in meters.
    pub dimensions: Point3<T>,
    /// Reverberation time in seconds; zero renders an anechoic room.
    pub t60: T,
    pub array_center: Point3<T>,
    pub source_positions: Vec<Point3<T>>,
    pub sample_rate: u32,
    pub sound_speed: T,
}

impl<T: Scalar> RoomConfig<T> {
    pub fn new(
        dimensions: Point3<T>,
        t60: T,
        array_center: Point3<T>,
        source_positions: Vec<Point3<T>>,
        sample_rate: u32,
    ) -> Result<Self> {
        let room = Self {
            dimensions,
            t60,
            array_center,
            source_positions,
            sample_rate,
            sound_speed: T::lit(MicArray::<T>::DEFAULT_SOUND_SPEED),
        };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .dimensions
            .iter()
            .any(|&d| !(d > T::zero()) || !d.is_finite())
        {
            return Err(Error::invalid("room dimensions must be positive"));
        }
        if !(self.t60 >= T::zero()) || !self.t60.is_finite() {
            return Err(Error::invalid(format!(
                "t60 must be a non-negative number of seconds, got {}",
                self.t60
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if !(self.sound_speed > T::zero()) {
            return Err(Error::invalid("sound speed must be positive"));
        }
        if !self.inside(&self.array_center, T::zero()) {
            return Err(Error::invalid("array center lies outside the room"));
        }
        for (c, p) in self.source_positions.iter().enumerate() {
            if !self.inside(p, T::zero()) {
                return Err(Error::invalid(format!("source {c} lies outside the room")));
            }
        }
        Ok(())
    }

    /// True when `p` is at least `margin` meters from every wall.
    pub fn inside(&self, p: &Point3<T>, margin: T) -> bool {
        (0..3).all(|k| p[k].is_finite() && p[k] >= margin && p[k] <= self.dimensions[k] - margin)
    }

    pub fn volume(&self) -> T {
        self.dimensions[0] * self.dimensions[1] * self.dimensions[2]
    }

    pub fn surface(&self) -> T {
        let [l, w, h] = self.dimensions;
        T::lit(2.0) * (l * w + l * h + w * h)
    }

    /// Wall pressure reflection coefficient for `t60`.
    ///
    /// Eyring's `beta = exp(-12 ln(10) V / (c S T60))` assumes a diffuse
    /// field. Shoebox image sources decay fastest across the short axes and
    /// slowest along the long one, so a response built with Eyring's value
    /// rings longer than requested; `ln beta` is scaled by
    /// [`image_decay_ratio`] to compensate.
    pub fn reflection_coefficient(&self) -> T {
        if self.t60 == T::zero() {
            return T::zero();
        }
        let ratio = image_decay_ratio(self.dimensions.map(|d| d.to_f64_lossy()));
        self.eyring_reflection_coefficient().powf(T::lit(ratio))
    }

    /// Plain Eyring inversion, without the image-decay correction.
    pub fn eyring_reflection_coefficient(&self) -> T {
        if self.t60 == T::zero() {
            return T::zero();
        }
        let k = T::lit(12.0) * T::LN_10() * self.volume()
            / (self.sound_speed * self.surface() * self.t60);
        (-k).exp()
    }

    /// Azimuth of source `c` seen from the array center.
    pub fn source_azimuth(&self, c: usize) -> T {
        azimuth_between(&self.array_center, &self.source_positions[c])
    }

    /// Absolute microphone positions for an array given relative to its
    /// own center.
    pub fn place_array(&self, array: &MicArray<T>) -> MicArray<T> {
        let c = array.centroid();
        array.translated([
            self.array_center[0] - c[0],
            self.array_center[1] - c[1],
            self.array_center[2] - c[2],
        ])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RirOptions<T> {
    /// Overrides the T60-derived wall reflection coefficient.
    pub reflection: Option<T>,
    /// Output length in samples; defaults to [`default_rir_length`].
    pub length: Option<usize>,
    /// Leaves out the 100 Hz high-pass applied to reverberant responses.
    pub skip_highpass: bool,
}

/// Schroeder T60 of the image-source energy decay in a shoebox with
/// uniform walls, relative to the diffuse-field value for the same
/// reflection coefficient.
///
/// An image reached along unit direction `u` has undergone about
/// `r * kappa(u)` reflections, `kappa(u) = sum_k |u_k| / L_k`, so its energy
/// decays at a rate proportional to `kappa(u)`; the diffuse field uses the
/// mean `S / 4V`. The decay curve `E(t) = <exp(-kappa t) / kappa>` is
/// averaged over directions and fitted between -5 and -35 dB.
pub fn image_decay_ratio(dims: [f64; 3]) -> f64 {
    const N: usize = 32;
    let mut kappa = Vec::with_capacity(N * N);
    for i in 0..N {
        // uniform in z = cos(theta) is uniform on the sphere
        let z = (i as f64 + 0.5) / N as f64;
        let r = (1.0 - z * z).sqrt();
        for j in 0..N {
            let phi = (j as f64 + 0.5) / N as f64 * std::f64::consts::FRAC_PI_2;
            kappa.push(r * phi.cos() / dims[0] + r * phi.sin() / dims[1] + z / dims[2]);
        }
    }
    let edc = |t: f64| kappa.iter().map(|&k| (-k * t).exp() / k).sum::<f64>();
    let e0 = edc(0.0);
    let level = |t: f64| 10.0 * (edc(t) / e0).log10();
    let time_at = |db: f64| {
        let mut hi = 1.0;
        while level(hi) > db {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if level(mid) > db {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let (t5, t35) = (time_at(-5.0), time_at(-35.0));
    let pts: Vec<(f64, f64)> = (0..64)
        .map(|i| {
            let t = t5 + (t35 - t5) * i as f64 / 63.0;
            (t, level(t))
        })
        .collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
    let kappa_mean = 0.5 * dims.iter().map(|d| 1.0 / d).sum::<f64>();
    (-60.0 / slope) / (6.0 * std::f64::consts::LN_10 / kappa_mean)
}

/// Allen and Berkley's 100 Hz high-pass, which removes the low-frequency
/// build-up of the all-positive image sum.
fn allen_berkley_highpass<T: Scalar>(h: &mut [T], fs: T) {
    let w = T::TAU() * T::lit(100.0) / fs;
    let r1 = (-w).exp();
    let b1 = T::lit(2.0) * r1 * w.cos();
    let b2 = -r1 * r1;
    let a1 = -(T::one() + r1);
    let (mut y0, mut y1) = (T::zero(), T::zero());
    for v in h.iter_mut() {
        let y2 = y1;
        y1 = y0;
        y0 = b1 * y1 + b2 * y2 + *v;
        *v = y0 + a1 * y1 + r1 * y2;
    }
}

/// `max(ceil(t60 * fs), direct-path delay + interpolation tail)`.
pub fn default_rir_length<T: Scalar>(room: &RoomConfig<T>, max_distance: T) -> usize {
    let fs = T::from_u32(room.sample_rate).unwrap();
    let reverb = (room.t60 * fs).ceil().to_usize().unwrap_or(0);
    let direct = (max_distance / room.sound_speed * fs)
        .ceil()
        .to_usize()
        .unwrap_or(0)
        + SINC_HALF_WIDTH
        + 1;
    reverb.max(direct)
}

fn distance<T: Scalar>(a: &Point3<T>, b: &Point3<T>) -> T {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Impulse response from source `source_index` to a microphone at `mic`.
pub fn simulate_rir<T: Scalar>(
    room: &RoomConfig<T>,
    source_index: usize,
    mic: &Point3<T>,
) -> Result<Vec<T>> {
    simulate_rir_with(room, source_index, mic, &RirOptions::default())
}

pub fn simulate_rir_with<T: Scalar>(
    room: &RoomConfig<T>,
    source_index: usize,
    mic: &Point3<T>,
    opts: &RirOptions<T>,
) -> Result<Vec<T>> {
    room.validate()?;
    let src = room.source_positions.get(source_index).ok_or_else(|| {
        Error::invalid(format!(
            "source index {source_index} out of range for {} sources",
            room.source_positions.len()
        ))
    })?;
    if !room.inside(mic, T::zero()) {
        return Err(Error::invalid("microphone lies outside the room"));
    }
    let beta = match opts.reflection {
        Some(b) => {
            if !(b >= T::zero() && b <= T::one()) {
                return Err(Error::invalid(format!(
                    "reflection coefficient must lie in [0, 1], got {b}"
                )));
            }
            if b > T::zero() && room.t60 <= T::zero() && opts.length.is_none() {
                return Err(Error::invalid(
                    "t60 <= 0 with non-zero reflections needs an explicit length",
                ));
            }
            b
        }
        None => room.reflection_coefficient(),
    };
    let direct = distance(src, mic);
    let len = opts
        .length
        .unwrap_or_else(|| default_rir_length(room, direct));
    let mut h = vec![T::zero(); len];
    if len == 0 {
        return Ok(h);
    }

    let fs = T::from_u32(room.sample_rate).unwrap();
    let c = room.sound_speed;
    let half = T::from_usize_lossy(SINC_HALF_WIDTH);
    // farthest image that still lands inside the response
    let reach = c * (T::from_usize_lossy(len) + half) / fs;
    let reach2 = reach * reach;

    // per-axis image offsets from the mic and their reflection counts
    let axes: Vec<Vec<(T, i32)>> = (0..3)
        .map(|k| {
            let span = T::lit(2.0) * room.dimensions[k];
            let order = if beta == T::zero() {
                0
            } else {
                (reach / span).ceil().to_i64().unwrap_or(0) + 1
            };
            let mut out = Vec::new();
            for n in -order..=order {
                for q in 0..2i64 {
                    let sign = T::from_i64(1 - 2 * q).unwrap();
                    let pos = sign * src[k] + span * T::from_i64(n).unwrap();
                    let refl = ((n - q).abs() + n.abs()) as i32;
                    if beta == T::zero() && refl > 0 {
                        continue;
                    }
                    let d = pos - mic[k];
                    if d * d <= reach2 {
                        out.push((d * d, refl));
                    }
                }
            }
            out
        })
        .collect();

    let four_pi = T::lit(4.0) * T::PI();
    for &(dx2, rx) in &axes[0] {
        for &(dy2, ry) in &axes[1] {
            let dxy = dx2 + dy2;
            if dxy > reach2 {
                continue;
            }
            for &(dz2, rz) in &axes[2] {
                let d2 = dxy + dz2;
                if d2 > reach2 {
                    continue;
                }
                let d = d2.sqrt();
                let refl = rx + ry + rz;
                let gain = if refl == 0 { T::one() } else { beta.powi(refl) };
                if gain == T::zero() {
                    continue;
                }
                add_fractional_impulse(&mut h, d / c * fs, gain / (four_pi * d));
            }
        }
    }
    if beta > T::zero() && !opts.skip_highpass {
        allen_berkley_highpass(&mut h, fs);
    }
    Ok(h)
}

/// Adds `amp * sinc(n - delay) * hann((n - delay) / 4)` around `delay`.
fn add_fractional_impulse<T: Scalar>(h: &mut [T], delay: T, amp: T) {
    let half = T::from_usize_lossy(SINC_HALF_WIDTH);
    let frac = delay - delay.floor();
    let lo = (delay - half).ceil().max(T::zero());
    let hi = (delay + half).floor();
    let (Some(lo), Some(hi)) = (lo.to_usize(), hi.to_usize()) else {
        return;
    };
    for n in lo..=hi.min(h.len().saturating_sub(1)) {
        let x = T::from_usize_lossy(n) - delay;
        let v = if frac == T::zero() {
            // integer delay: exact unit impulse
            if x == T::zero() {
                T::one()
            } else {
                T::zero()
            }
        } else {
            let px = T::PI() * x;
            let sinc = px.sin() / px;
            let win = T::lit(0.5) * (T::one() + (px / half).cos());
            sinc * win
        };
        h[n] += amp * v;
    }
}

/// Linear convolution through one FFT round trip, truncated to `out_len`.
struct Convolver<T: Scalar> {
    size: usize,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Scalar> Convolver<T> {
    fn new(total_len: usize) -> Self {
        let size = total_len.max(1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            size,
            fwd: planner.plan_fft_forward(size),
            inv: planner.plan_fft_inverse(size),
        }
    }

    fn spectrum(&self, x: &[T]) -> Vec<Complex<T>> {
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.size];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.fwd.process(&mut buf);
        buf
    }

    fn apply(&self, x_spec: &[Complex<T>], h: &[T], out_len: usize) -> Vec<T> {
        let mut buf = self.spectrum(h);
        for (b, x) in buf.iter_mut().zip(x_spec) {
            *b *= *x;
        }
        self.inv.process(&mut buf);
        let scale = T::one() / T::from_usize_lossy(self.size);
        buf.iter().take(out_len).map(|c| c.re * scale).collect()
    }
}

/// Linear convolution of `x` and `h`, keeping the first `out_len` samples.
pub fn convolve<T: Scalar>(x: &[T], h: &[T], out_len: usize) -> Vec<T> {
    if x.is_empty() || h.is_empty() {
        return vec![T::zero(); out_len];
    }
    let conv = Convolver::new(x.len() + h.len() - 1);
    let spec = conv.spectrum(x);
    let mut y = conv.apply(&spec, h, out_len);
    y.resize(out_len, T::zero());
    y
}

/// A single-channel dry source signal.
#[derive(Debug, Clone, PartialEq)]
pub struct DrySource<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

/// Rendered scene: per-source reverberant images and their sum.
#[derive(Debug, Clone)]
pub struct MixtureScene<T> {
    /// `[mic][sample]`
    pub mixture: Vec<Vec<T>>,
    /// `[source][mic][sample]`, gains already applied.
    pub images: Vec<Vec<Vec<T>>>,
    pub dry_sources: Vec<Vec<T>>,
    /// Source azimuths seen from the array center, degrees.
    pub directions: Vec<T>,
    /// Linear gains applied to each source's image.
    pub gains: Vec<T>,
    pub t60: T,
    pub room: RoomConfig<T>,
    pub sample_rate: u32,
}

impl<T: Scalar> MixtureScene<T> {
    pub fn num_samples(&self) -> usize {
        self.mixture.first().map_or(0, Vec::len)
    }

    pub fn num_sources(&self) -> usize {
        self.images.len()
    }
}

fn mean_square<T: Scalar>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    x.iter().map(|&v| v * v).sum::<T>() / T::from_usize_lossy(x.len())
}

/// Convolves each dry source with its RIRs, applies level gains and sums.
///
/// `array` is given relative to its own center and is placed at
/// `room.array_center`. Gains are relative levels in dB measured on the
/// reference channel: source `c` ends up `gains_db[c] - gains_db[0]` dB
/// above source 0, and source 0 is scaled by `gains_db[0]` dB. All outputs
/// have the length of the longest dry source.
pub fn render_mixture<T: Scalar>(
    dry_sources: &[DrySource<T>],
    room: &RoomConfig<T>,
    array: &MicArray<T>,
    gains_db: &[T],
) -> Result<MixtureScene<T>> {
    render_mixture_with(dry_sources, room, array, gains_db, &RirOptions::default())
}

pub fn render_mixture_with<T: Scalar>(
    dry_sources: &[DrySource<T>],
    room: &RoomConfig<T>,
    array: &MicArray<T>,
    gains_db: &[T],
    rir_opts: &RirOptions<T>,
) -> Result<MixtureScene<T>> {
    room.validate()?;
    if dry_sources.is_empty() {
        return Err(Error::invalid("at least one dry source is required"));
    }
    if dry_sources.len() != room.source_positions.len() {
        return Err(Error::invalid(format!(
            "{} dry sources but {} source positions",
            dry_sources.len(),
            room.source_positions.len()
        )));
    }
    if gains_db.len() != dry_sources.len() {
        return Err(Error::invalid(format!(
            "{} gains for {} sources",
            gains_db.len(),
            dry_sources.len()
        )));
    }
    for (c, d) in dry_sources.iter().enumerate() {
        if d.sample_rate != room.sample_rate {
            return Err(Error::invalid(format!(
                "source {c} sampled at {} Hz, room renders at {} Hz",
                d.sample_rate, room.sample_rate
            )));
        }
        if d.samples.iter().all(|&v| v == T::zero()) {
            return Err(Error::DegenerateInput(format!("dry source {c} is silent")));
        }
        if d.samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "dry source {c} has non-finite samples"
            )));
        }
    }

    let placed = room.place_array(array);
    let mics = placed.positions();
    for (j, m) in mics.iter().enumerate() {
        if !room.inside(m, T::zero()) {
            return Err(Error::invalid(format!(
                "microphone {j} lies outside the room"
            )));
        }
    }
    let max_dist = room
        .source_positions
        .iter()
        .flat_map(|s| mics.iter().map(move |m| distance(s, m)))
        .fold(T::zero(), T::max);
    let rir_len = rir_opts
        .length
        .unwrap_or_else(|| default_rir_length(room, max_dist));
    let opts = RirOptions {
        reflection: Some(
            rir_opts
                .reflection
                .unwrap_or_else(|| room.reflection_coefficient()),
        ),
        length: Some(rir_len),
        skip_highpass: rir_opts.skip_highpass,
    };
    let out_len = dry_sources.iter().map(|d| d.samples.len()).max().unwrap();
    let conv = Convolver::new(out_len + rir_len - 1);
    let ref_ch = placed.ref_index();

    let mut images = Vec::with_capacity(dry_sources.len());
    for (c, dry) in dry_sources.iter().enumerate() {
        let spec = conv.spectrum(&dry.samples);
        let per_mic = mics
            .iter()
            .map(|m| {
                let h = simulate_rir_with(room, c, m, &opts)?;
                Ok(conv.apply(&spec, &h, out_len))
            })
            .collect::<Result<Vec<_>>>()?;
        images.push(per_mic);
    }

    let powers: Vec<T> = images.iter().map(|img| mean_square(&img[ref_ch])).collect();
    if let Some(c) = powers.iter().position(|&p| p == T::zero()) {
        return Err(Error::DegenerateInput(format!(
            "source {c} produces a silent reference-channel image"
        )));
    }
    let db_to_power = |db: T| T::lit(10.0).powf(db / T::lit(10.0));
    let gains: Vec<T> = powers
        .iter()
        .zip(gains_db)
        .map(|(&p, &g)| (powers[0] * db_to_power(g) / p).sqrt())
        .collect();
    for (img, &g) in images.iter_mut().zip(&gains) {
        for ch in img.iter_mut() {
            ch.iter_mut().for_each(|v| *v *= g);
        }
    }

    let mut mixture = vec![vec![T::zero(); out_len]; mics.len()];
    for img in &images {
        for (mix_ch, img_ch) in mixture.iter_mut().zip(img) {
            for (m, &v) in mix_ch.iter_mut().zip(img_ch) {
                *m += v;
            }
        }
    }

    let dry: Vec<Vec<T>> = dry_sources
        .iter()
        .map(|d| {
            let mut s = d.samples.clone();
            s.resize(out_len, T::zero());
            s
        })
        .collect();
    let directions = (0..dry.len()).map(|c| room.source_azimuth(c)).collect();

    Ok(MixtureScene {
        mixture,
        images,
        dry_sources: dry,
        directions,
        gains,
        t60: room.t60,
        room: room.clone(),
        sample_rate: room.sample_rate,
    })
}

/// Sampled scene geometry and levels.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec<T> {
    pub room: RoomConfig<T>,
    pub directions: Vec<T>,
    pub gains_db: Vec<T>,
}

/// Ranges for random scene generation.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSampler<T> {
    pub min_dimensions: Point3<T>,
    pub max_dimensions: Point3<T>,
    pub t60_range: (T, T),
    pub wall_margin: T,
    /// Radius of the array around its center, added to the wall margin.
    pub array_radius: T,
    /// Minimum horizontal source distance from the array center.
    pub min_source_distance: T,
    /// Each source level is drawn from `[-x, x]` dB.
    pub gain_spread_db: T,
    pub max_retries: usize,
}

impl<T: Scalar> Default for SceneSampler<T> {
    fn default() -> Self {
        Self {
            min_dimensions: [T::lit(3.0), T::lit(3.0), T::lit(2.5)],
            max_dimensions: [T::lit(8.0), T::lit(10.0), T::lit(6.0)],
            t60_range: (T::lit(0.05), T::lit(0.5)),
            wall_margin: T::lit(0.3),
            array_radius: T::lit(0.035),
            min_source_distance: T::lit(0.5),
            gain_spread_db: T::lit(2.5),
            max_retries: 1000,
        }
    }
}

impl<T: Scalar> SceneSampler<T> {
    pub fn sample(&self, seed: u64, n_sources: usize, sample_rate: u32) -> Result<SceneSpec<T>> {
        if !(2..=3).contains(&n_sources) {
            return Err(Error::invalid(format!(
                "scenes hold 2 or 3 sources, got {n_sources}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |lo: T, hi: T| -> T {
            let u: f64 = rng.gen();
            lo + (hi - lo) * T::lit(u)
        };
        let dims: Point3<T> =
            std::array::from_fn(|k| uniform(self.min_dimensions[k], self.max_dimensions[k]));
        let t60 = uniform(self.t60_range.0, self.t60_range.1);
        let m = self.wall_margin;
        let ma = m + self.array_radius;
        if dims[0] <= ma + ma || dims[1] <= ma + ma || dims[2] <= m + m {
            return Err(Error::Generation(
                "room too small for the wall margin".into(),
            ));
        }
        let z = uniform(m, dims[2] - m);
        let center = [uniform(ma, dims[0] - ma), uniform(ma, dims[1] - ma), z];
        let mut sources = Vec::with_capacity(n_sources);
        for c in 0..n_sources {
            let mut placed = None;
            for _ in 0..self.max_retries {
                let p = [uniform(m, dims[0] - m), uniform(m, dims[1] - m), z];
                let d = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
                if d >= self.min_source_distance {
                    placed = Some(p);
                    break;
                }
            }
            let p = placed.ok_or_else(|| {
                Error::Generation(format!(
                    "could not place source {c} after {} attempts",
                    self.max_retries
                ))
            })?;
            sources.push(p);
        }
        let gains_db = (0..n_sources)
            .map(|_| uniform(-self.gain_spread_db, self.gain_spread_db))
            .collect();
        let room = RoomConfig::new(dims, t60, center, sources, sample_rate)?;
        let directions = (0..n_sources).map(|c| room.source_azimuth(c)).collect();
        Ok(SceneSpec {
            room,
            directions,
            gains_db,
        })
    }
}

/// Samples a random room, T60, array placement and source positions with
/// the default ranges; deterministic for a given seed.
pub fn sample_scene<T: Scalar>(
    rng_seed: u64,
    n_sources: usize,
    sample_rate: u32,
) -> Result<SceneSpec<T>> {
    SceneSampler::default().sample(rng_seed, n_sources, sample_rate)
}
