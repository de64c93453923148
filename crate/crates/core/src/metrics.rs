//! SI-SDR, SI-SDR improvement, and reports binned by the angle difference
//! between the target and its closest interferer.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// Magnitude of the dB cap that replaces infinite SI-SDR values.
pub const SI_SDR_CAP_DB: f64 = 300.0;

fn zero_mean<T: Scalar>(x: &[T]) -> Vec<T> {
    let mean = x.iter().copied().sum::<T>() / T::from_usize_lossy(x.len());
    x.iter().map(|&v| v - mean).collect()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Scale-invariant signal-to-distortion ratio in dB, capped at ±300 dB.
pub fn si_sdr<T: Scalar>(estimate: &[T], reference: &[T]) -> Result<T> {
    if estimate.len() != reference.len() {
        return Err(Error::invalid(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::invalid("empty signals"));
    }
    let est = zero_mean(estimate);
    let refr = zero_mean(reference);
    let ref_energy = dot(&refr, &refr);
    if ref_energy == T::zero() {
        return Err(Error::invalid("reference is zero after mean removal"));
    }
    let scale = dot(&est, &refr) / ref_energy;
    let target_energy = scale * scale * ref_energy;
    let cap = T::lit(SI_SDR_CAP_DB);
    if target_energy == T::zero() {
        return Ok(-cap);
    }
    let err_energy: T = est
        .iter()
        .zip(&refr)
        .map(|(&e, &r)| {
            let d = e - scale * r;
            d * d
        })
        .sum();
    if err_energy < T::lit(1e-30) * target_energy {
        return Ok(cap);
    }
    let db = T::lit(10.0) * (target_energy / err_energy).log10();
    Ok(db.max(-cap).min(cap))
}

/// `si_sdr(estimate, reference) - si_sdr(mixture_ref, reference)`.
pub fn si_sdri<T: Scalar>(estimate: &[T], reference: &[T], mixture_ref: &[T]) -> Result<T> {
    Ok(si_sdr(estimate, reference)? - si_sdr(mixture_ref, reference)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub utterance: String,
    pub target_azimuth: f64,
    pub angle_difference: f64,
    pub si_sdr_est: f64,
    pub si_sdr_mix: f64,
    pub method: String,
}

impl EvalRecord {
    pub fn si_sdri(&self) -> f64 {
        self.si_sdr_est - self.si_sdr_mix
    }
}

/// Angle-difference bin edges: `[0,15) [15,45) [45,90) [90,180]`.
pub const BIN_EDGES: [f64; 5] = [0.0, 15.0, 45.0, 90.0, 180.0];
pub const BIN_LABELS: [&str; 4] = ["<15", "15-45", "45-90", ">90"];

/// Bin index of an angle difference in degrees.
pub fn angle_bin(ad: f64) -> usize {
    if ad < BIN_EDGES[1] {
        0
    } else if ad < BIN_EDGES[2] {
        1
    } else if ad < BIN_EDGES[3] {
        2
    } else {
        3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub bin: String,
    pub count: usize,
    /// Absent when the bin is empty.
    pub mean_si_sdri: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bins: Vec<BinStat>,
    pub overall: BinStat,
}

impl EvalReport {
    pub fn bin_mean(&self, bin: usize) -> Option<f64> {
        self.bins[bin].mean_si_sdri
    }

    pub fn overall_mean(&self) -> Option<f64> {
        self.overall.mean_si_sdri
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `bin,count,mean_si_sdri` rows, the overall row last; empty means are
    /// left blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,count,mean_si_sdri\n");
        for b in self.bins.iter().chain(std::iter::once(&self.overall)) {
            let mean = b
                .mean_si_sdri
                .map(|m| format!("{m:.6}"))
                .unwrap_or_default();
            writeln!(out, "{},{},{}", b.bin, b.count, mean).unwrap();
        }
        out
    }
}

/// Mean SI-SDRi per angle-difference bin and overall. Records are summed
/// in a fixed order per bin so the result does not depend on input order.
pub fn aggregate(records: &[EvalRecord]) -> EvalReport {
    let mut per_bin: [Vec<f64>; 4] = Default::default();
    for r in records {
        per_bin[angle_bin(r.angle_difference)].push(r.si_sdri());
    }
    let stat = |label: &str, vals: &mut Vec<f64>| {
        vals.sort_by(f64::total_cmp);
        BinStat {
            bin: label.to_string(),
            count: vals.len(),
            mean_si_sdri: if vals.is_empty() {
                None
            } else {
                Some(vals.iter().sum::<f64>() / vals.len() as f64)
            },
        }
    };
    let mut all: Vec<f64> = per_bin.iter().flatten().copied().collect();
    let bins = per_bin
        .iter_mut()
        .zip(BIN_LABELS)
        .map(|(v, l)| stat(l, v))
        .collect();
    EvalReport {
        bins,
        overall: stat("all", &mut all),
    }
}
