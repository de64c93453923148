//! Inter-channel and directional features on top of the kernel STFT:
//! IPD, angle feature (AF), delay-and-sum filterbank, directional power
//! ratio (DPR) and the concatenated per-frame feature stack.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array2, Array3, ArrayView2, Axis};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::geometry::{
    band_frequency, pair_phase, DirectionGrid, MicArray, PairSelection, SourceDirection,
};
use crate::spectral::{build_kernel, lps, stft, ComplexSpectrogram, StftConfig, StftKernel};
use crate::Scalar;

/// Beam-power sums below this are treated as silence in [`dpr`].
pub const DPR_SILENCE: f64 = 1e-12;

/// Default AF pre-mask: bins more than this many dB below the utterance
/// maximum of the reference channel are zeroed.
pub const DEFAULT_PREMASK_DB: f64 = 40.0;

/// Spectrograms of all array channels, sharing one configuration.
#[derive(Debug, Clone)]
pub struct MultichannelSpectrogram<T> {
    channels: Vec<ComplexSpectrogram<T>>,
}

impl<T: Scalar> MultichannelSpectrogram<T> {
    pub fn new(channels: Vec<ComplexSpectrogram<T>>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::invalid("multichannel spectrogram needs a channel"))?;
        for (j, ch) in channels.iter().enumerate().skip(1) {
            if ch.data().dim() != first.data().dim() || ch.config() != first.config() {
                return Err(Error::invalid(format!(
                    "channel {j} shape or configuration differs from channel 0"
                )));
            }
        }
        Ok(Self { channels })
    }

    /// Runs [`stft`] on every channel.
    pub fn analyze(signals: &[Vec<T>], kernel: &StftKernel<T>) -> Result<Self> {
        let channels = signals
            .iter()
            .map(|s| stft(s, kernel))
            .collect::<Result<Vec<_>>>()?;
        Self::new(channels)
    }

    pub fn channels(&self) -> &[ComplexSpectrogram<T>] {
        &self.channels
    }

    pub fn channel(&self, j: usize) -> &ComplexSpectrogram<T> {
        &self.channels[j]
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn num_frames(&self) -> usize {
        self.channels[0].num_frames()
    }

    pub fn num_bins(&self) -> usize {
        self.channels[0].num_bins()
    }

    pub fn config(&self) -> &StftConfig<T> {
        self.channels[0].config()
    }

    /// Same spectrogram with every channel multiplied by `gain`.
    pub fn scaled(&self, gain: T) -> Self {
        Self {
            channels: self
                .channels
                .iter()
                .map(|c| {
                    ComplexSpectrogram::new(c.data().mapv(|v| v * gain), c.config().clone())
                        .expect("scaling keeps invariants")
                })
                .collect(),
        }
    }
}

fn phase<T: Scalar>(c: Complex<T>) -> T {
    if c.re == T::zero() && c.im == T::zero() {
        T::zero()
    } else {
        c.im.atan2(c.re)
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase<T: Scalar>(x: T) -> T {
    let tau = T::TAU();
    let mut r = x % tau;
    if r > T::PI() {
        r -= tau;
    } else if r <= -T::PI() {
        r += tau;
    }
    r
}

/// IPD of one microphone pair with its cosine and sine maps.
#[derive(Debug, Clone)]
pub struct IpdMap<T> {
    pub pair: (usize, usize),
    pub ipd: Array2<T>,
    pub cos: Array2<T>,
    pub sin: Array2<T>,
}

/// `angle(Y_u1) - angle(Y_u2)` for every selected pair, wrapped to
/// `(-π, π]`. Zero bins have phase 0.
pub fn ipd<T: Scalar>(
    spec: &MultichannelSpectrogram<T>,
    pairs: &PairSelection,
) -> Result<Vec<IpdMap<T>>> {
    let j = spec.num_channels();
    pairs
        .pairs()
        .iter()
        .map(|&(a, b)| {
            if a >= j || b >= j {
                return Err(Error::invalid(format!(
                    "pair ({a}, {b}) out of range for {j} channels"
                )));
            }
            let ipd = ndarray::Zip::from(spec.channel(a).data())
                .and(spec.channel(b).data())
                .map_collect(|&x, &y| wrap_phase(phase(x) - phase(y)));
            Ok(IpdMap {
                pair: (a, b),
                cos: ipd.mapv(T::cos),
                sin: ipd.mapv(T::sin),
                ipd,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleFeatureParams<T> {
    pub premask_db: T,
}

impl<T: Scalar> Default for AngleFeatureParams<T> {
    fn default() -> Self {
        Self {
            premask_db: T::lit(DEFAULT_PREMASK_DB),
        }
    }
}

/// Boolean map of bins whose reference-channel magnitude lies within
/// `premask_db` of the utterance maximum.
pub fn premask<T: Scalar>(reference: &ComplexSpectrogram<T>, premask_db: T) -> Array2<bool> {
    let mag = reference.magnitude();
    let peak = mag.iter().copied().fold(T::zero(), T::max);
    if peak == T::zero() {
        return mag.mapv(|_| false);
    }
    let floor = peak * T::lit(10.0).powf(-premask_db / T::lit(20.0));
    mag.mapv(|m| m >= floor)
}

/// Steering phases `[pair][band]` for a far-field source at `azimuth`.
fn steering_table<T: Scalar>(
    array: &MicArray<T>,
    azimuth: T,
    pairs: &PairSelection,
    fft_size: usize,
    bins: usize,
    sample_rate: u32,
) -> Vec<Vec<T>> {
    let delays = array.tdoa(&SourceDirection::new(azimuth));
    pairs
        .pairs()
        .iter()
        .map(|&pair| {
            (0..bins)
                .map(|m| pair_phase(&delays, pair, band_frequency(m, fft_size, sample_rate)))
                .collect()
        })
        .collect()
}

/// Mean over pairs of `cos(IPD - steering phase)`, with pre-masked bins set
/// to 0. Values lie in `[-1, 1]`.
pub fn angle_feature<T: Scalar>(
    spec: &MultichannelSpectrogram<T>,
    azimuth: T,
    array: &MicArray<T>,
    pairs: &PairSelection,
    params: &AngleFeatureParams<T>,
) -> Result<Array2<T>> {
    if array.num_mics() != spec.num_channels() {
        return Err(Error::invalid(format!(
            "array has {} microphones, spectrogram {} channels",
            array.num_mics(),
            spec.num_channels()
        )));
    }
    let ipds = ipd(spec, pairs)?;
    angle_feature_from_ipd(spec, &ipds, azimuth, array, pairs, params)
}

/// [`angle_feature`] reusing precomputed IPD maps.
pub fn angle_feature_from_ipd<T: Scalar>(
    spec: &MultichannelSpectrogram<T>,
    ipds: &[IpdMap<T>],
    azimuth: T,
    array: &MicArray<T>,
    pairs: &PairSelection,
    params: &AngleFeatureParams<T>,
) -> Result<Array2<T>> {
    if ipds.len() != pairs.len() {
        return Err(Error::invalid("IPD maps do not match the pair selection"));
    }
    let cfg = spec.config();
    let bins = spec.num_bins();
    let steer = steering_table(
        array,
        azimuth,
        pairs,
        cfg.fft_size(),
        bins,
        cfg.sample_rate(),
    );
    let (steer_cos, steer_sin): (Vec<Vec<T>>, Vec<Vec<T>>) = steer
        .iter()
        .map(|row| {
            (
                row.iter().map(|v| v.cos()).collect(),
                row.iter().map(|v| v.sin()).collect(),
            )
        })
        .unzip();
    let mask = premask(spec.channel(array.ref_index()), params.premask_db);
    let inv_u = T::one() / T::from_usize_lossy(pairs.len());
    let mut af = Array2::zeros((spec.num_frames(), bins));
    for ((t, m), v) in af.indexed_iter_mut() {
        if !mask[[t, m]] {
            continue;
        }
        let mut acc = T::zero();
        for (u, map) in ipds.iter().enumerate() {
            // cos(a - b) = cos a cos b + sin a sin b
            acc += map.cos[[t, m]] * steer_cos[u][m] + map.sin[[t, m]] * steer_sin[u][m];
        }
        *v = (acc * inv_u).max(-T::one()).min(T::one());
    }
    Ok(af)
}

/// Delay-and-sum weights `w[p][m][j] = exp(-2πi f_m Δt_{p,j}) / J`.
#[derive(Debug, Clone)]
pub struct DasFilterbank<T> {
    weights: Array3<Complex<T>>,
    grid: DirectionGrid<T>,
}

impl<T: Scalar> DasFilterbank<T> {
    pub fn weights(&self) -> &Array3<Complex<T>> {
        &self.weights
    }

    pub fn grid(&self) -> &DirectionGrid<T> {
        &self.grid
    }

    pub fn num_directions(&self) -> usize {
        self.weights.dim().0
    }

    pub fn num_bins(&self) -> usize {
        self.weights.dim().1
    }

    pub fn num_mics(&self) -> usize {
        self.weights.dim().2
    }

    /// Beamformer output power `|w_{p,m}^H y|^2` for one bin vector `y`.
    pub fn beam_power(&self, p: usize, m: usize, y: &[Complex<T>]) -> T {
        let w = self.weights.slice(ndarray::s![p, m, ..]);
        let mut acc = Complex::new(T::zero(), T::zero());
        for (wj, yj) in w.iter().zip(y) {
            acc += wj.conj() * yj;
        }
        acc.norm_sqr()
    }
}

pub fn das_weights<T: Scalar>(
    array: &MicArray<T>,
    azimuth: T,
    fft_size: usize,
    bins: usize,
    sample_rate: u32,
) -> Array2<Complex<T>> {
    let delays = array.tdoa(&SourceDirection::new(azimuth));
    let inv_j = T::one() / T::from_usize_lossy(array.num_mics());
    Array2::from_shape_fn((bins, array.num_mics()), |(m, j)| {
        let f: T = band_frequency(m, fft_size, sample_rate);
        Complex::from_polar(inv_j, -T::TAU() * f * delays[j])
    })
}

pub fn das_filterbank<T: Scalar>(
    array: &MicArray<T>,
    grid: &DirectionGrid<T>,
    cfg: &StftConfig<T>,
) -> DasFilterbank<T> {
    let bins = cfg.num_bins();
    let j = array.num_mics();
    let mut weights = Array3::from_elem((grid.len(), bins, j), Complex::new(T::zero(), T::zero()));
    for (p, &az) in grid.azimuths().iter().enumerate() {
        let w = das_weights(array, az, cfg.fft_size(), bins, cfg.sample_rate());
        weights.index_axis_mut(Axis(0), p).assign(&w);
    }
    DasFilterbank {
        weights,
        grid: grid.clone(),
    }
}

fn check_bank<T: Scalar>(spec: &MultichannelSpectrogram<T>, bank: &DasFilterbank<T>) -> Result<()> {
    if bank.num_mics() != spec.num_channels() || bank.num_bins() != spec.num_bins() {
        return Err(Error::invalid(format!(
            "filterbank is {} mics x {} bins, spectrogram {} channels x {} bins",
            bank.num_mics(),
            bank.num_bins(),
            spec.num_channels(),
            spec.num_bins()
        )));
    }
    Ok(())
}

/// DPR maps for every grid direction, `[p]` of `frames x bins`. Each bin
/// sums to 1 over directions; silent bins are `1/P` everywhere.
pub fn dpr_all<T: Scalar>(
    spec: &MultichannelSpectrogram<T>,
    bank: &DasFilterbank<T>,
) -> Result<Vec<Array2<T>>> {
    check_bank(spec, bank)?;
    let (frames, bins, p_count, j) = (
        spec.num_frames(),
        spec.num_bins(),
        bank.num_directions(),
        spec.num_channels(),
    );
    let mut out = vec![Array2::zeros((frames, bins)); p_count];
    let uniform = T::one() / T::from_usize_lossy(p_count);
    let silence = T::lit(DPR_SILENCE);
    let mut y = vec![Complex::new(T::zero(), T::zero()); j];
    let mut powers = vec![T::zero(); p_count];
    for t in 0..frames {
        for m in 0..bins {
            for (jj, yj) in y.iter_mut().enumerate() {
                *yj = spec.channel(jj).data()[[t, m]];
            }
            let mut total = T::zero();
            for (p, pw) in powers.iter_mut().enumerate() {
                *pw = bank.beam_power(p, m, &y);
                total += *pw;
            }
            for (p, map) in out.iter_mut().enumerate() {
                map[[t, m]] = if total < silence {
                    uniform
                } else {
                    powers[p] / total
                };
            }
        }
    }
    Ok(out)
}

/// DPR map of grid direction `p`.
pub fn dpr<T: Scalar>(
    spec: &MultichannelSpectrogram<T>,
    bank: &DasFilterbank<T>,
    p: usize,
) -> Result<Array2<T>> {
    if p >= bank.num_directions() {
        return Err(Error::invalid(format!(
            "direction index {p} out of range for {} directions",
            bank.num_directions()
        )));
    }
    Ok(dpr_all(spec, bank)?.swap_remove(p))
}

pub fn nearest_direction<T: Scalar>(grid: &DirectionGrid<T>, azimuth: T) -> usize {
    grid.nearest(azimuth)
}

/// One named block of a feature stack, `frames x width`.
#[derive(Debug, Clone)]
pub struct FeatureBlock<T> {
    pub name: String,
    pub data: Array2<T>,
}

impl<T> FeatureBlock<T> {
    pub fn new(name: impl Into<String>, data: Array2<T>) -> Self {
        Self {
            name: name.into(),
            data,
        }
    }
}

/// Ordered `(name, width)` list describing the columns of a stack.
/// Text form: `lps:33;cosipd:198;af_tgt:33`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLayout {
    blocks: Vec<(String, usize)>,
}

impl FeatureLayout {
    pub fn new(blocks: Vec<(String, usize)>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::invalid("feature layout is empty"));
        }
        for (name, _) in &blocks {
            if name.is_empty() || name.contains([':', ';']) || name.chars().any(char::is_whitespace)
            {
                return Err(Error::invalid(format!("invalid block name {name:?}")));
            }
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[(String, usize)] {
        &self.blocks
    }

    pub fn width(&self) -> usize {
        self.blocks.iter().map(|(_, w)| w).sum()
    }

    /// Column range of the named block.
    pub fn range_of(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let mut start = 0;
        for (n, w) in &self.blocks {
            if n == name {
                return Some(start..start + w);
            }
            start += w;
        }
        None
    }
}

impl fmt::Display for FeatureLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, width)) in self.blocks.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{name}:{width}")?;
        }
        Ok(())
    }
}

impl FromStr for FeatureLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let blocks = s
            .split(';')
            .map(|item| {
                let (name, width) = item
                    .split_once(':')
                    .ok_or_else(|| Error::invalid(format!("layout item {item:?} lacks ':'")))?;
                let width = width
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad block width in {item:?}")))?;
                Ok((name.to_string(), width))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(blocks)
    }
}

/// `frames x D` matrix plus the layout of its columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack<T> {
    pub data: Array2<T>,
    pub layout: FeatureLayout,
}

impl<T: Scalar> FeatureStack<T> {
    pub fn new(data: Array2<T>, layout: FeatureLayout) -> Result<Self> {
        if data.ncols() != layout.width() {
            return Err(Error::invalid(format!(
                "stack has {} columns, layout declares {}",
                data.ncols(),
                layout.width()
            )));
        }
        Ok(Self { data, layout })
    }

    pub fn num_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn block(&self, name: &str) -> Option<ArrayView2<'_, T>> {
        self.layout
            .range_of(name)
            .map(|r| self.data.slice(ndarray::s![.., r]))
    }
}

/// Concatenates blocks column-wise in the given order.
pub fn assemble_features<T: Scalar>(blocks: &[FeatureBlock<T>]) -> Result<FeatureStack<T>> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::invalid("no feature blocks to assemble"))?;
    let frames = first.data.nrows();
    for b in blocks {
        if b.data.nrows() != frames {
            return Err(Error::invalid(format!(
                "block {} has {} frames, expected {frames}",
                b.name,
                b.data.nrows()
            )));
        }
    }
    let views: Vec<_> = blocks.iter().map(|b| b.data.view()).collect();
    let data = concatenate(Axis(1), &views).expect("row counts checked");
    let layout = FeatureLayout::new(
        blocks
            .iter()
            .map(|b| (b.name.clone(), b.data.ncols()))
            .collect(),
    )?;
    FeatureStack::new(data, layout)
}

/// Stacks per-pair maps side by side: `frames x (U * bins)`.
fn pair_block<T: Scalar>(maps: &[&Array2<T>]) -> Array2<T> {
    let views: Vec<_> = maps.iter().map(|m| m.view()).collect();
    concatenate(Axis(1), &views).expect("pair maps share shape")
}

/// Whether directional features cover the target only, or the target and
/// its closest interferer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Tgt,
    TgtIntf,
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tgt" => Ok(Condition::Tgt),
            "tgt+intf" => Ok(Condition::TgtIntf),
            other => Err(Error::invalid(format!(
                "unknown condition {other:?} (expected tgt or tgt+intf)"
            ))),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Tgt => "tgt",
            Condition::TgtIntf => "tgt+intf",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSelection {
    pub lps: bool,
    pub cosipd: bool,
    pub sinipd: bool,
    pub af: bool,
    pub dpr: bool,
    pub condition: Condition,
}

impl Default for FeatureSelection {
    /// LPS + cosIPD + AF + DPR for the target only.
    fn default() -> Self {
        Self {
            lps: true,
            cosipd: true,
            sinipd: false,
            af: true,
            dpr: true,
            condition: Condition::Tgt,
        }
    }
}

impl FeatureSelection {
    /// Parses a comma-separated list such as `lps,cosipd,af,dpr`.
    pub fn parse(list: &str, condition: Condition) -> Result<Self> {
        let mut sel = Self {
            lps: false,
            cosipd: false,
            sinipd: false,
            af: false,
            dpr: false,
            condition,
        };
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "lps" => sel.lps = true,
                "cosipd" => sel.cosipd = true,
                "sinipd" => sel.sinipd = true,
                "af" => sel.af = true,
                "dpr" => sel.dpr = true,
                other => {
                    return Err(Error::invalid(format!("unknown feature {other:?}")));
                }
            }
        }
        if !(sel.lps || sel.cosipd || sel.sinipd || sel.af || sel.dpr) {
            return Err(Error::invalid("feature selection is empty"));
        }
        Ok(sel)
    }

    /// Column count for `bins` bands and `pairs` microphone pairs.
    pub fn width(&self, bins: usize, pairs: usize) -> usize {
        let dirs = match self.condition {
            Condition::Tgt => 1,
            Condition::TgtIntf => 2,
        };
        bins * (usize::from(self.lps)
            + pairs * (usize::from(self.cosipd) + usize::from(self.sinipd))
            + dirs * (usize::from(self.af) + usize::from(self.dpr)))
    }
}

/// Everything needed to turn multichannel audio into feature stacks.
#[derive(Debug, Clone)]
pub struct FeatureExtractor<T> {
    pub kernel: StftKernel<T>,
    pub array: MicArray<T>,
    pub pairs: PairSelection,
    pub bank: DasFilterbank<T>,
    pub af_params: AngleFeatureParams<T>,
}

impl<T: Scalar> FeatureExtractor<T> {
    pub fn new(
        array: MicArray<T>,
        pairs: PairSelection,
        grid: &DirectionGrid<T>,
        cfg: &StftConfig<T>,
    ) -> Result<Self> {
        for &(a, b) in pairs.pairs() {
            if a >= array.num_mics() || b >= array.num_mics() {
                return Err(Error::invalid(format!(
                    "pair ({a}, {b}) out of range for {} microphones",
                    array.num_mics()
                )));
            }
        }
        let kernel = build_kernel(cfg)?;
        let bank = das_filterbank(&array, grid, cfg);
        Ok(Self {
            kernel,
            array,
            pairs,
            bank,
            af_params: AngleFeatureParams::default(),
        })
    }

    pub fn analyze(&self, channels: &[Vec<T>]) -> Result<MultichannelSpectrogram<T>> {
        if channels.len() != self.array.num_mics() {
            return Err(Error::invalid(format!(
                "{} channels for a {}-microphone array",
                channels.len(),
                self.array.num_mics()
            )));
        }
        MultichannelSpectrogram::analyze(channels, &self.kernel)
    }

    pub fn angle_feature(
        &self,
        spec: &MultichannelSpectrogram<T>,
        azimuth: T,
    ) -> Result<Array2<T>> {
        angle_feature(spec, azimuth, &self.array, &self.pairs, &self.af_params)
    }

    /// Builds the selected blocks in the fixed order lps, cosipd, sinipd,
    /// af (tgt, intf), dpr (tgt, intf).
    pub fn extract(
        &self,
        spec: &MultichannelSpectrogram<T>,
        target_azimuth: T,
        interferer_azimuth: Option<T>,
        sel: &FeatureSelection,
    ) -> Result<FeatureStack<T>> {
        let mut directions = vec![("tgt", target_azimuth)];
        if sel.condition == Condition::TgtIntf {
            let intf = interferer_azimuth
                .ok_or_else(|| Error::invalid("tgt+intf features need an interferer direction"))?;
            directions.push(("intf", intf));
        }
        let mut blocks = Vec::new();
        if sel.lps {
            blocks.push(FeatureBlock::new(
                "lps",
                lps(spec.channel(self.array.ref_index())),
            ));
        }
        let ipds = if sel.cosipd || sel.sinipd || sel.af {
            ipd(spec, &self.pairs)?
        } else {
            Vec::new()
        };
        if sel.cosipd {
            let maps: Vec<_> = ipds.iter().map(|m| &m.cos).collect();
            blocks.push(FeatureBlock::new("cosipd", pair_block(&maps)));
        }
        if sel.sinipd {
            let maps: Vec<_> = ipds.iter().map(|m| &m.sin).collect();
            blocks.push(FeatureBlock::new("sinipd", pair_block(&maps)));
        }
        if sel.af {
            for &(tag, az) in &directions {
                let af = angle_feature_from_ipd(
                    spec,
                    &ipds,
                    az,
                    &self.array,
                    &self.pairs,
                    &self.af_params,
                )?;
                blocks.push(FeatureBlock::new(format!("af_{tag}"), af));
            }
        }
        if sel.dpr {
            let all = dpr_all(spec, &self.bank)?;
            for &(tag, az) in &directions {
                let p = nearest_direction(self.bank.grid(), az);
                blocks.push(FeatureBlock::new(format!("dpr_{tag}"), all[p].clone()));
            }
        }
        assemble_features(&blocks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spec(frames: usize, channels: usize, seed: u64) -> MultichannelSpectrogram<f64> {
        let cfg = StftConfig::feature_default(16000);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chans = (0..channels)
            .map(|_| {
                let d = Array2::from_shape_fn((frames, 33), |_| {
                    Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                });
                ComplexSpectrogram::new(d, cfg.clone()).unwrap()
            })
            .collect();
        MultichannelSpectrogram::new(chans).unwrap()
    }

    fn cfg_kernel() -> StftKernel<f64> {
        build_kernel(&StftConfig::feature_default(16000)).unwrap()
    }

    #[test]
    fn identical_channels_have_zero_ipd() {
        let s = random_spec(10, 1, 1);
        let two =
            MultichannelSpectrogram::new(vec![s.channel(0).clone(), s.channel(0).clone()]).unwrap();
        let pairs = PairSelection::new(vec![(0, 1)], 2).unwrap();
        let maps = ipd(&two, &pairs).unwrap();
        assert!(maps[0].ipd.iter().all(|&v| v == 0.0));
        assert!(maps[0].cos.iter().all(|&v| v == 1.0));
        assert!(maps[0].sin.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn integer_delay_gives_linear_phase() {
        let k = cfg_kernel();
        let d = 3usize;
        for m in [5usize, 9, 13] {
            let x: Vec<f64> = (0..2000)
                .map(|n| (2.0 * std::f64::consts::PI * m as f64 * n as f64 / 64.0).cos())
                .collect();
            let mut delayed = vec![0.0; d];
            delayed.extend_from_slice(&x[..x.len() - d]);
            let spec = MultichannelSpectrogram::analyze(&[x, delayed], &k).unwrap();
            let pairs = PairSelection::new(vec![(0, 1)], 2).unwrap();
            let maps = ipd(&spec, &pairs).unwrap();
            let want = wrap_phase(2.0 * std::f64::consts::PI * (m * d) as f64 / 64.0);
            for t in 1..maps[0].ipd.nrows() {
                let got = maps[0].ipd[[t, m]];
                assert!(
                    wrap_phase(got - want).abs() < 0.05,
                    "m={m} t={t}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn af_is_one_at_perfect_alignment() {
        // build a spectrogram whose IPDs equal the steering phases exactly
        let array = MicArray::<f64>::circular(6, 0.07).unwrap();
        let pairs = PairSelection::default_six();
        let cfg = StftConfig::feature_default(16000);
        let az = 37.0;
        let delays = array.tdoa(&SourceDirection::new(az));
        let chans = (0..6)
            .map(|j| {
                let d = Array2::from_shape_fn((4, 33), |(_, m)| {
                    let f: f64 = band_frequency(m, 64, 16000);
                    Complex::from_polar(1.0, -std::f64::consts::TAU * f * delays[j])
                });
                ComplexSpectrogram::new(d, cfg.clone()).unwrap()
            })
            .collect();
        let spec = MultichannelSpectrogram::new(chans).unwrap();
        let af = angle_feature(&spec, az, &array, &pairs, &AngleFeatureParams::default()).unwrap();
        for &v in af.iter() {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn af_silent_is_zero_and_premask() {
        let array = MicArray::<f64>::circular(6, 0.07).unwrap();
        let k = cfg_kernel();
        let spec = MultichannelSpectrogram::analyze(&vec![vec![0.0; 800]; 6], &k).unwrap();
        let af = angle_feature(
            &spec,
            0.0,
            &array,
            &PairSelection::default_six(),
            &Default::default(),
        )
        .unwrap();
        assert!(af.iter().all(|&v| v == 0.0));

        let mut s = random_spec(5, 6, 3);
        // push one bin 60 dB below everything else on the reference channel
        let mut chans: Vec<_> = s.channels().to_vec();
        let mut d = chans[0].data().clone();
        d[[2, 7]] = Complex::new(1e-4, 0.0);
        chans[0] = ComplexSpectrogram::new(d, chans[0].config().clone()).unwrap();
        s = MultichannelSpectrogram::new(chans).unwrap();
        let af = angle_feature(
            &s,
            10.0,
            &array,
            &PairSelection::default_six(),
            &Default::default(),
        )
        .unwrap();
        assert_eq!(af[[2, 7]], 0.0);
        assert!(af.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn das_weight_invariants() {
        let array = MicArray::<f64>::circular(6, 0.07).unwrap();
        let bank = das_filterbank(
            &array,
            &DirectionGrid::default(),
            &StftConfig::feature_default(16000),
        );
        assert_eq!(bank.weights().dim(), (36, 33, 6));
        for p in 0..36 {
            for j in 0..6 {
                assert_eq!(bank.weights()[[p, 0, j]], Complex::new(1.0 / 6.0, 0.0));
            }
        }
        for w in bank.weights().iter() {
            assert_abs_diff_eq!(w.norm(), 1.0 / 6.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn das_beam_favors_true_direction_over_antipode() {
        let array = MicArray::<f64>::circular(6, 0.07).unwrap();
        let grid = DirectionGrid::default();
        let bank = das_filterbank(&array, &grid, &StftConfig::feature_default(16000));
        for p in [0usize, 7, 13, 22, 30] {
            let delays = array.tdoa(&SourceDirection::new(grid.azimuths()[p]));
            let anti = (p + 18) % 36;
            for m in 8..33 {
                let f: f64 = band_frequency(m, 64, 16000);
                let y: Vec<_> = delays
                    .iter()
                    .map(|d| Complex::from_polar(1.0, -std::f64::consts::TAU * f * d))
                    .collect();
                assert!(bank.beam_power(p, m, &y) > bank.beam_power(anti, m, &y));
            }
        }
    }

    #[test]
    fn dpr_sums_to_one_and_silent_is_uniform() {
        let array = MicArray::<f64>::circular(6, 0.07).unwrap();
        let bank = das_filterbank(
            &array,
            &DirectionGrid::default(),
            &StftConfig::feature_default(16000),
        );
        let s = random_spec(6, 6, 9);
        let all = dpr_all(&s, &bank).unwrap();
        for t in 0..6 {
            for m in 0..33 {
                let sum: f64 = all.iter().map(|d| d[[t, m]]).sum();
                assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-6);
            }
        }
        let k = cfg_kernel();
        let silent = MultichannelSpectrogram::analyze(&vec![vec![0.0; 400]; 6], &k).unwrap();
        let d = dpr(&silent, &bank, 4).unwrap();
        assert!(d.iter().all(|&v| v == 1.0 / 36.0));
        assert!(dpr(&silent, &bank, 36).is_err());
    }

    #[test]
    fn nearest_direction_examples() {
        let g = DirectionGrid::<f64>::default();
        assert_eq!(g.azimuths()[nearest_direction(&g, 14.0)], 10.0);
        assert_eq!(g.azimuths()[nearest_direction(&g, 15.0)], 10.0);
        assert_eq!(g.azimuths()[nearest_direction(&g, 359.0)], 0.0);
    }

    #[test]
    fn assemble_widths() {
        let b = |name: &str, w: usize| FeatureBlock::new(name, Array2::<f64>::zeros((7, w)));
        let s = assemble_features(&[
            b("lps", 33),
            b("cosipd", 198),
            b("af_tgt", 33),
            b("dpr_tgt", 33),
        ])
        .unwrap();
        assert_eq!(s.dim(), 297);
        let s = assemble_features(&[
            b("lps", 33),
            b("cosipd", 198),
            b("af_tgt", 33),
            b("af_intf", 33),
            b("dpr_tgt", 33),
            b("dpr_intf", 33),
        ])
        .unwrap();
        assert_eq!(s.dim(), 363);
        assert_eq!(s.layout.range_of("af_intf"), Some(264..297));

        let single = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64);
        let s = assemble_features(&[FeatureBlock::new("x", single.clone())]).unwrap();
        assert_eq!(s.data, single);

        let bad = [b("a", 3), FeatureBlock::new("b", Array2::zeros((6, 3)))];
        assert!(matches!(
            assemble_features(&bad),
            Err(Error::InvalidArgument(_))
        ));
        assert!(assemble_features::<f64>(&[]).is_err());
    }

    #[test]
    fn layout_text_round_trip() {
        let l: FeatureLayout = "lps:33;cosipd:198;af_tgt:33".parse().unwrap();
        assert_eq!(l.width(), 264);
        assert_eq!(l.to_string(), "lps:33;cosipd:198;af_tgt:33");
        assert!("lps".parse::<FeatureLayout>().is_err());
        assert!("".parse::<FeatureLayout>().is_err());
    }

    #[test]
    fn selection_widths() {
        let sel = FeatureSelection::parse("lps,cosipd,af,dpr", Condition::Tgt).unwrap();
        assert_eq!(sel.width(33, 6), 297);
        let sel = FeatureSelection::parse("lps,cosipd,af,dpr", Condition::TgtIntf).unwrap();
        assert_eq!(sel.width(33, 6), 363);
        let sel = FeatureSelection::parse("cosipd", Condition::Tgt).unwrap();
        assert_eq!(sel.width(33, 6), 198);
        assert!(FeatureSelection::parse("lps,mfcc", Condition::Tgt).is_err());
    }

    #[test]
    fn extractor_matches_selection_width() {
        let array = MicArray::<f64>::circular(6, 0.07).unwrap();
        let ex = FeatureExtractor::new(
            array,
            PairSelection::default_six(),
            &DirectionGrid::default(),
            &StftConfig::feature_default(16000),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let chans: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..1600).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let spec = ex.analyze(&chans).unwrap();
        for (list, cond, width) in [
            ("lps,cosipd,af,dpr", Condition::Tgt, 297),
            ("lps,cosipd,af,dpr", Condition::TgtIntf, 363),
            ("cosipd", Condition::Tgt, 198),
            ("lps,cosipd,sinipd", Condition::Tgt, 429),
        ] {
            let sel = FeatureSelection::parse(list, cond).unwrap();
            let stack = ex.extract(&spec, 30.0, Some(200.0), &sel).unwrap();
            assert_eq!(stack.dim(), width);
            assert_eq!(stack.num_frames(), spec.num_frames());
        }
        let sel = FeatureSelection::parse("af", Condition::TgtIntf).unwrap();
        assert!(ex.extract(&spec, 30.0, None, &sel).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ipd_antisymmetric(seed in 0u64..1000) {
            let s = random_spec(4, 2, seed);
            let fwd = ipd(&s, &PairSelection::new(vec![(0, 1)], 2).unwrap()).unwrap();
            let rev = ipd(&s, &PairSelection::new(vec![(1, 0)], 2).unwrap()).unwrap();
            for ((a, b), (ca, cb)) in fwd[0].ipd.iter().zip(&rev[0].ipd).zip(fwd[0].cos.iter().zip(&rev[0].cos)) {
                prop_assert!(wrap_phase(a + b).abs() < 1e-9 || (wrap_phase(a + b).abs() - std::f64::consts::TAU).abs() < 1e-9);
                prop_assert!((ca - cb).abs() < 1e-12);
            }
            for (a, b) in fwd[0].sin.iter().zip(&rev[0].sin) {
                prop_assert!((a + b).abs() < 1e-9);
            }
        }

        #[test]
        fn af_and_dpr_scale_invariant(seed in 0u64..1000, gain in 0.01f64..100.0) {
            let array = MicArray::<f64>::circular(6, 0.07).unwrap();
            let bank = das_filterbank(&array, &DirectionGrid::default(), &StftConfig::feature_default(16000));
            let s = random_spec(3, 6, seed);
            let g = s.scaled(gain);
            let pairs = PairSelection::default_six();
            let a = angle_feature(&s, 45.0, &array, &pairs, &Default::default()).unwrap();
            let b = angle_feature(&g, 45.0, &array, &pairs, &Default::default()).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            let a = dpr(&s, &bank, 5).unwrap();
            let b = dpr(&g, &bank, 5).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
