//! Microphone-array geometry, far-field TDOAs and angle arithmetic.
//!
//! Azimuths are in degrees, measured counter-clockwise from the +x axis in
//! the horizontal array plane. Sources are modelled as plane waves for all
//! TDOA and steering computations; `SourceDirection::distance` is only
//! consumed by the room simulator.

use crate::error::{Error, Result};
use crate::Scalar;

pub type Point3<T> = [T; 3];

/// Wraps an azimuth into `[0, 360)`.
pub fn normalize_azimuth<T: Scalar>(deg: T) -> T {
    let full = T::lit(360.0);
    let r = deg % full;
    let r = if r < T::zero() { r + full } else { r };
    // -1e-20 % 360 + 360 rounds to 360.0
    if r >= full {
        T::zero()
    } else {
        r
    }
}

/// Minimal circular separation of two azimuths, in `[0, 180]`.
pub fn angle_difference<T: Scalar>(phi1: T, phi2: T) -> T {
    let d = (normalize_azimuth(phi1) - normalize_azimuth(phi2)).abs();
    d.min(T::lit(360.0) - d)
}

/// Angle difference between `target` and its closest interferer.
pub fn min_angle_difference<T: Scalar>(target: T, others: &[T]) -> Result<T> {
    others
        .iter()
        .map(|&o| angle_difference(target, o))
        .reduce(T::min)
        .ok_or_else(|| Error::invalid("min_angle_difference needs at least one other direction"))
}

/// Horizontal azimuth (degrees) of `to` as seen from `from`.
pub fn azimuth_between<T: Scalar>(from: &Point3<T>, to: &Point3<T>) -> T {
    let dy = to[1] - from[1];
    let dx = to[0] - from[0];
    normalize_azimuth(dy.atan2(dx).to_degrees())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceDirection<T> {
    azimuth: T,
    distance: Option<T>,
}

impl<T: Scalar> SourceDirection<T> {
    /// Far-field direction; the azimuth is wrapped into `[0, 360)`.
    pub fn new(azimuth: T) -> Self {
        Self {
            azimuth: normalize_azimuth(azimuth),
            distance: None,
        }
    }

    pub fn with_distance(azimuth: T, distance: T) -> Result<Self> {
        if !(distance > T::zero()) || !distance.is_finite() {
            return Err(Error::invalid(format!(
                "source distance must be positive, got {distance}"
            )));
        }
        Ok(Self {
            azimuth: normalize_azimuth(azimuth),
            distance: Some(distance),
        })
    }

    pub fn azimuth(&self) -> T {
        self.azimuth
    }

    pub fn distance(&self) -> Option<T> {
        self.distance
    }

    /// Unit vector pointing from the array towards the source.
    pub fn unit_vector(&self) -> Point3<T> {
        let rad = self.azimuth.to_radians();
        [rad.cos(), rad.sin(), T::zero()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicArray<T> {
    positions: Vec<Point3<T>>,
    ref_index: usize,
    sound_speed: T,
}

impl<T: Scalar> MicArray<T> {
    pub const DEFAULT_SOUND_SPEED: f64 = 343.0;

    pub fn new(positions: Vec<Point3<T>>, ref_index: usize, sound_speed: T) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid(
                "microphone array needs at least one element",
            ));
        }
        if ref_index >= positions.len() {
            return Err(Error::invalid(format!(
                "reference index {ref_index} out of range for {} microphones",
                positions.len()
            )));
        }
        if !(sound_speed > T::zero()) || !sound_speed.is_finite() {
            return Err(Error::invalid("sound speed must be positive and finite"));
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("microphone positions must be finite"));
        }
        for (i, a) in positions.iter().enumerate() {
            for (j, b) in positions.iter().enumerate().skip(i + 1) {
                if a == b {
                    return Err(Error::invalid(format!(
                        "microphones {i} and {j} share the same position"
                    )));
                }
            }
        }
        Ok(Self {
            positions,
            ref_index,
            sound_speed,
        })
    }

    /// `count` microphones evenly spaced on a horizontal circle centred at
    /// the origin. Microphone 0 sits at azimuth 0 and numbering runs
    /// counter-clockwise; channel 0 is the reference.
    pub fn circular(count: usize, diameter: T) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid(
                "circular array needs at least one microphone",
            ));
        }
        if !(diameter > T::zero()) || !diameter.is_finite() {
            return Err(Error::invalid(format!(
                "array diameter must be positive, got {diameter}"
            )));
        }
        let radius = diameter / T::lit(2.0);
        let step = T::TAU() / T::from_usize_lossy(count);
        let positions = (0..count)
            .map(|i| {
                let a = step * T::from_usize_lossy(i);
                [radius * a.cos(), radius * a.sin(), T::zero()]
            })
            .collect();
        Self::new(positions, 0, T::lit(Self::DEFAULT_SOUND_SPEED))
    }

    pub fn num_mics(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[Point3<T>] {
        &self.positions
    }

    pub fn ref_index(&self) -> usize {
        self.ref_index
    }

    pub fn sound_speed(&self) -> T {
        self.sound_speed
    }

    pub fn centroid(&self) -> Point3<T> {
        let n = T::from_usize_lossy(self.positions.len());
        let mut c = [T::zero(); 3];
        for p in &self.positions {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        c.map(|v| v / n)
    }

    /// Same array moved rigidly by `offset`.
    pub fn translated(&self, offset: Point3<T>) -> Self {
        Self {
            positions: self
                .positions
                .iter()
                .map(|p| [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]])
                .collect(),
            ref_index: self.ref_index,
            sound_speed: self.sound_speed,
        }
    }

    /// Plane-wave arrival delay of each microphone relative to the
    /// reference microphone, in seconds. Positive means the wavefront
    /// reaches that microphone later than the reference.
    pub fn tdoa(&self, dir: &SourceDirection<T>) -> Vec<T> {
        let u = dir.unit_vector();
        let r = &self.positions[self.ref_index];
        self.positions
            .iter()
            .map(|p| {
                let proj = (r[0] - p[0]) * u[0] + (r[1] - p[1]) * u[1] + (r[2] - p[2]) * u[2];
                proj / self.sound_speed
            })
            .collect()
    }

    /// Expected anechoic IPD `angle(Y_u1) - angle(Y_u2)` at STFT band `band`
    /// for a plane wave from `dir`. Not wrapped; linear in `band`.
    pub fn steering_phase(
        &self,
        dir: &SourceDirection<T>,
        pair: (usize, usize),
        band: usize,
        fft_size: usize,
        sample_rate: u32,
    ) -> Result<T> {
        check_band(band, fft_size)?;
        let j = self.num_mics();
        if pair.0 >= j || pair.1 >= j {
            return Err(Error::invalid(format!(
                "pair {:?} out of range for {j} microphones",
                pair
            )));
        }
        let delays = self.tdoa(dir);
        Ok(pair_phase(
            &delays,
            pair,
            band_frequency(band, fft_size, sample_rate),
        ))
    }
}

pub(crate) fn check_band(band: usize, fft_size: usize) -> Result<()> {
    if band > fft_size / 2 {
        return Err(Error::invalid(format!(
            "band {band} out of range for {fft_size}-point FFT"
        )));
    }
    Ok(())
}

/// Centre frequency of STFT band `band`, in Hz.
pub fn band_frequency<T: Scalar>(band: usize, fft_size: usize, sample_rate: u32) -> T {
    T::from_usize_lossy(band) * T::from_u32(sample_rate).unwrap() / T::from_usize_lossy(fft_size)
}

/// A delay `d` turns into a spectral phase `-2π f d`, so the expected phase
/// difference between the two channels is `2π f (d_u2 - d_u1)`.
pub(crate) fn pair_phase<T: Scalar>(delays: &[T], pair: (usize, usize), freq: T) -> T {
    T::TAU() * freq * (delays[pair.1] - delays[pair.0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionGrid<T> {
    azimuths: Vec<T>,
}

impl<T: Scalar> DirectionGrid<T> {
    pub fn new(azimuths: Vec<T>) -> Result<Self> {
        if azimuths.len() < 2 {
            return Err(Error::invalid(
                "direction grid needs at least two directions",
            ));
        }
        if azimuths
            .iter()
            .any(|&a| !(a >= T::zero() && a < T::lit(360.0)))
        {
            return Err(Error::invalid("grid azimuths must lie in [0, 360)"));
        }
        if azimuths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("grid azimuths must be strictly ascending"));
        }
        Ok(Self { azimuths })
    }

    /// Evenly spaced grid starting at 0 degrees.
    pub fn uniform(step_deg: T) -> Result<Self> {
        if !(step_deg > T::zero()) || step_deg > T::lit(180.0) {
            return Err(Error::invalid(format!(
                "grid step must be in (0, 180], got {step_deg}"
            )));
        }
        let count = (T::lit(360.0) / step_deg - T::lit(1e-9))
            .ceil()
            .to_usize()
            .unwrap_or(0);
        Self::new(
            (0..count)
                .map(|p| step_deg * T::from_usize_lossy(p))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.azimuths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.azimuths.is_empty()
    }

    pub fn azimuths(&self) -> &[T] {
        &self.azimuths
    }

    /// Grid index closest to `azimuth` on the circle; ties go to the lower
    /// index.
    pub fn nearest(&self, azimuth: T) -> usize {
        let mut best = 0;
        let mut best_d = T::infinity();
        for (p, &a) in self.azimuths.iter().enumerate() {
            let d = angle_difference(a, azimuth);
            if d < best_d {
                best = p;
                best_d = d;
            }
        }
        best
    }
}

impl<T: Scalar> Default for DirectionGrid<T> {
    /// 36 directions at 10 degree spacing.
    fn default() -> Self {
        Self::uniform(T::lit(10.0)).expect("10 degree grid is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSelection {
    pairs: Vec<(usize, usize)>,
}

impl PairSelection {
    /// Zero-based pairs, validated against `num_channels`.
    pub fn new(pairs: Vec<(usize, usize)>, num_channels: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("pair selection is empty"));
        }
        for &(a, b) in &pairs {
            if a == b {
                return Err(Error::invalid(format!("pair ({a}, {b}) repeats a channel")));
            }
            if a >= num_channels || b >= num_channels {
                return Err(Error::invalid(format!(
                    "pair ({a}, {b}) out of range for {num_channels} channels"
                )));
            }
        }
        Ok(Self { pairs })
    }

    /// Converts 1-based channel numbers, as written in configs, to 0-based.
    pub fn from_one_based(pairs: &[(usize, usize)], num_channels: usize) -> Result<Self> {
        let converted = pairs
            .iter()
            .map(|&(a, b)| {
                if a == 0 || b == 0 {
                    Err(Error::invalid("1-based channel numbers start at 1"))
                } else {
                    Ok((a - 1, b - 1))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(converted, num_channels)
    }

    /// (1,4) (2,5) (3,6) (1,2) (3,4) (5,6) for a six-element array.
    pub fn default_six() -> Self {
        Self::from_one_based(&[(1, 4), (2, 5), (3, 6), (1, 2), (3, 4), (5, 6)], 6)
            .expect("default pairs valid")
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}
