//! Time-frequency masks and the separators built on them.
//!
//! Oracle masks (IBM, IRM, IPSM) need the ground-truth reverberant images.
//! The directional heuristic mask is a training-free stand-in for a learned
//! separator: it scores each bin from the target's angle feature and
//! directional power ratio.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Zip};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::geometry::MicArray;
use crate::spatial_features::{das_weights, MultichannelSpectrogram};
use crate::spectral::{istft, stft, ComplexSpectrogram, StftConfig, StftKernel};
use crate::Scalar;

const MASK_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskKind {
    Ibm,
    Irm,
    Ipsm,
    DirectionalHeuristic,
}

impl MaskKind {
    pub fn is_oracle(self) -> bool {
        !matches!(self, MaskKind::DirectionalHeuristic)
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskKind::Ibm => "ibm",
            MaskKind::Irm => "irm",
            MaskKind::Ipsm => "ipsm",
            MaskKind::DirectionalHeuristic => "heuristic",
        })
    }
}

impl FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ibm" => Ok(MaskKind::Ibm),
            "irm" => Ok(MaskKind::Irm),
            "ipsm" => Ok(MaskKind::Ipsm),
            "heuristic" => Ok(MaskKind::DirectionalHeuristic),
            other => Err(Error::invalid(format!("unknown mask kind {other:?}"))),
        }
    }
}

/// Real-valued `frames x bins` gain map tied to the STFT configuration it
/// was computed in.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask<T> {
    pub values: Array2<T>,
    pub kind: MaskKind,
    config: StftConfig<T>,
}

impl<T: Scalar> Mask<T> {
    pub fn new(values: Array2<T>, kind: MaskKind, config: StftConfig<T>) -> Result<Self> {
        if values.ncols() != config.num_bins() {
            return Err(Error::invalid(format!(
                "mask has {} bins, configuration expects {}",
                values.ncols(),
                config.num_bins()
            )));
        }
        Ok(Self {
            values,
            kind,
            config,
        })
    }

    pub fn config(&self) -> &StftConfig<T> {
        &self.config
    }
}

/// Whether the ratio mask uses magnitudes (default) or powers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RatioScale {
    #[default]
    Magnitude,
    Power,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleOptions {
    pub irm_scale: RatioScale,
}

/// Oracle mask for `target_image_ref` against the other sources' images,
/// all on the reference channel.
///
/// With `S` the target STFT, `I_c` the interferers and `Y = S + sum I_c`:
/// IBM is 1 where `|S| > max_c |I_c|` (ties give 0), IRM is
/// `|S| / (|S| + sum |I_c|)` and IPSM is `|S| cos(∠S - ∠Y) / |Y|` clipped
/// to `[0, 1]`.
pub fn oracle_mask<T: Scalar>(
    target_image_ref: &[T],
    other_images_ref: &[Vec<T>],
    kind: MaskKind,
    kernel: &StftKernel<T>,
) -> Result<Mask<T>> {
    oracle_mask_with(
        target_image_ref,
        other_images_ref,
        kind,
        kernel,
        &OracleOptions::default(),
    )
}

pub fn oracle_mask_with<T: Scalar>(
    target_image_ref: &[T],
    other_images_ref: &[Vec<T>],
    kind: MaskKind,
    kernel: &StftKernel<T>,
    opts: &OracleOptions,
) -> Result<Mask<T>> {
    if !kind.is_oracle() {
        return Err(Error::invalid(format!("{kind} is not an oracle mask")));
    }
    for (c, other) in other_images_ref.iter().enumerate() {
        if other.len() != target_image_ref.len() {
            return Err(Error::invalid(format!(
                "interferer {c} has {} samples, target {}",
                other.len(),
                target_image_ref.len()
            )));
        }
    }
    let s = stft(target_image_ref, kernel)?;
    let others = other_images_ref
        .iter()
        .map(|x| stft(x, kernel))
        .collect::<Result<Vec<_>>>()?;
    let eps = T::lit(MASK_EPS);
    let (frames, bins) = s.data().dim();
    let mut values = Array2::zeros((frames, bins));
    for ((t, m), v) in values.indexed_iter_mut() {
        let st = s.data()[[t, m]];
        let s_mag = st.norm();
        *v = match kind {
            MaskKind::Ibm => {
                let max_i = others
                    .iter()
                    .map(|o| o.data()[[t, m]].norm())
                    .fold(T::zero(), T::max);
                if s_mag > max_i {
                    T::one()
                } else {
                    T::zero()
                }
            }
            MaskKind::Irm => match opts.irm_scale {
                RatioScale::Magnitude => {
                    let sum_i: T = others.iter().map(|o| o.data()[[t, m]].norm()).sum();
                    s_mag / (s_mag + sum_i + eps)
                }
                RatioScale::Power => {
                    let sum_i: T = others.iter().map(|o| o.data()[[t, m]].norm_sqr()).sum();
                    let sp = s_mag * s_mag;
                    sp / (sp + sum_i + eps)
                }
            },
            MaskKind::Ipsm => {
                let y = others.iter().fold(st, |acc, o| acc + o.data()[[t, m]]);
                // |S| cos(∠S - ∠Y) = Re(S conj(Y)) / |Y|
                let y_mag = y.norm();
                let num = (st * y.conj()).re / y_mag.max(eps);
                (num / (y_mag + eps)).max(T::zero()).min(T::one())
            }
            MaskKind::DirectionalHeuristic => unreachable!(),
        };
    }
    Mask::new(values, kind, kernel.config().clone())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicParams<T> {
    /// Weight of the angle-feature term.
    pub alpha: T,
    /// Weight of the directional-power-ratio term.
    pub beta: T,
}

impl<T: Scalar> Default for HeuristicParams<T> {
    fn default() -> Self {
        Self {
            alpha: T::one(),
            beta: T::one(),
        }
    }
}

fn check_shape<T>(name: &str, a: &Array2<T>, want: (usize, usize)) -> Result<()> {
    if a.dim() != want {
        return Err(Error::invalid(format!(
            "{name} has shape {:?}, expected {want:?}",
            a.dim()
        )));
    }
    Ok(())
}

/// Directional heuristic mask.
///
/// `score = (alpha * (af_tgt + 1) / 2 + beta * dpr_tgt / max(dpr_tgt)) /
/// (alpha + beta)`. When interferer features are supplied the score is
/// zeroed wherever the target loses on every supplied comparison
/// (`af_tgt < af_intf` and `dpr_tgt < dpr_intf`). The result is clipped to
/// `[0, 1]`.
pub fn directional_mask<T: Scalar>(
    af_tgt: &Array2<T>,
    dpr_tgt: &Array2<T>,
    af_intf: Option<&Array2<T>>,
    dpr_intf: Option<&Array2<T>>,
    params: &HeuristicParams<T>,
    cfg: &StftConfig<T>,
) -> Result<Mask<T>> {
    let shape = af_tgt.dim();
    check_shape("dpr_tgt", dpr_tgt, shape)?;
    if let Some(a) = af_intf {
        check_shape("af_intf", a, shape)?;
    }
    if let Some(d) = dpr_intf {
        check_shape("dpr_intf", d, shape)?;
    }
    if params.alpha < T::zero()
        || params.beta < T::zero()
        || params.alpha + params.beta <= T::zero()
    {
        return Err(Error::invalid(
            "heuristic weights must be non-negative with a positive sum",
        ));
    }
    let dpr_peak = dpr_tgt.iter().copied().fold(T::zero(), T::max);
    let half = T::lit(0.5);
    let total = params.alpha + params.beta;
    let mut values = Array2::zeros(shape);
    for ((t, m), v) in values.indexed_iter_mut() {
        let af = af_tgt[[t, m]];
        let dpr = dpr_tgt[[t, m]];
        let dpr_norm = if dpr_peak > T::zero() {
            dpr / dpr_peak
        } else {
            T::zero()
        };
        let mut score = (params.alpha * (af + T::one()) * half + params.beta * dpr_norm) / total;
        if af_intf.is_some() || dpr_intf.is_some() {
            let af_wins = af_intf.is_some_and(|a| af >= a[[t, m]]);
            let dpr_wins = dpr_intf.is_some_and(|d| dpr >= d[[t, m]]);
            if !(af_wins || dpr_wins) {
                score = T::zero();
            }
        }
        *v = score.max(T::zero()).min(T::one());
    }
    Mask::new(values, MaskKind::DirectionalHeuristic, cfg.clone())
}

/// Target estimate at the reference channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationResult<T> {
    pub estimate: Vec<T>,
    pub method: String,
    pub azimuth: Option<T>,
}

fn fit_length<T: Scalar>(mut y: Vec<T>, len: usize) -> Vec<T> {
    y.resize(len, T::zero());
    y
}

/// Masks the mixture STFT (keeping the mixture phase) and resynthesizes.
pub fn apply_mask<T: Scalar>(
    mixture_ref: &[T],
    mask: &Mask<T>,
    kernel: &StftKernel<T>,
) -> Result<SeparationResult<T>> {
    if mask.config() != kernel.config() {
        return Err(Error::invalid(
            "mask was computed with a different STFT configuration",
        ));
    }
    let spec = stft(mixture_ref, kernel)?;
    let masked = spec.masked(&mask.values)?;
    let y = istft(&masked, kernel)?;
    Ok(SeparationResult {
        estimate: fit_length(y, mixture_ref.len()),
        method: mask.kind.to_string(),
        azimuth: None,
    })
}

/// Delay-and-sum beamformer steered at `azimuth`, `w^H Y` per bin.
pub fn das_beamform<T: Scalar>(
    mixture: &[Vec<T>],
    azimuth: T,
    array: &MicArray<T>,
    kernel: &StftKernel<T>,
) -> Result<SeparationResult<T>> {
    if mixture.len() != array.num_mics() {
        return Err(Error::invalid(format!(
            "{} channels for a {}-microphone array",
            mixture.len(),
            array.num_mics()
        )));
    }
    let len = mixture[0].len();
    let spec = MultichannelSpectrogram::analyze(mixture, kernel)?;
    let cfg = kernel.config();
    let w = das_weights(
        array,
        azimuth,
        cfg.fft_size(),
        cfg.num_bins(),
        cfg.sample_rate(),
    );
    let (frames, bins) = (spec.num_frames(), spec.num_bins());
    let mut out = Array2::from_elem((frames, bins), Complex::new(T::zero(), T::zero()));
    for ((t, m), o) in out.indexed_iter_mut() {
        let mut acc = Complex::new(T::zero(), T::zero());
        for j in 0..array.num_mics() {
            acc += w[[m, j]].conj() * spec.channel(j).data()[[t, m]];
        }
        *o = acc;
    }
    let y = istft(&ComplexSpectrogram::new(out, cfg.clone())?, kernel)?;
    Ok(SeparationResult {
        estimate: fit_length(y, len),
        method: "das".into(),
        azimuth: Some(azimuth),
    })
}

/// Elementwise check that a mask respects its kind's value range.
pub fn mask_in_range<T: Scalar>(mask: &Mask<T>) -> bool {
    match mask.kind {
        MaskKind::Ibm => mask.values.iter().all(|&v| v == T::zero() || v == T::one()),
        _ => mask.values.iter().all(|&v| v >= T::zero() && v <= T::one()),
    }
}

/// Broadcast helper used by tests and callers that want a constant mask.
pub fn constant_mask<T: Scalar>(
    value: T,
    frames: usize,
    cfg: &StftConfig<T>,
    kind: MaskKind,
) -> Mask<T> {
    Mask::new(
        Array2::from_elem((frames, cfg.num_bins()), value),
        kind,
        cfg.clone(),
    )
    .expect("shape built from config")
}

/// Ratio of the energy of `a - b` to the energy of `b`, in dB.
pub fn relative_error_db<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut err = T::zero();
    let mut sig = T::zero();
    Zip::from(ndarray::ArrayView1::from(a))
        .and(ndarray::ArrayView1::from(b))
        .for_each(|&x, &y| {
            err += (x - y) * (x - y);
            sig += y * y;
        });
    T::lit(10.0) * (err / sig).log10()
}
