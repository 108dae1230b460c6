//! Reconstruction and sensing quality metrics.

use ndarray::{Array, Array1, Array2, Dimension};

use crate::error::{Error, Result};
use crate::hash::{fingerprint, hamming};
use crate::scene::SpectrumPair;

/// PSNR reported for an exact reconstruction.
pub const PSNR_CAP: f64 = 200.0;

/// `10 log10(peak^2 / MSE)` with `peak = max |truth|`, capped at
/// [`PSNR_CAP`].
pub fn psnr<D: Dimension>(decoded: &Array<f64, D>, truth: &Array<f64, D>) -> Result<f64> {
    if decoded.shape() != truth.shape() {
        return Err(Error::shape(truth.shape(), decoded.shape()));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("PSNR of an empty array".into()));
    }
    let mse = decoded.iter().zip(truth.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / truth.len() as f64;
    let peak = truth.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !mse.is_finite() {
        return Err(Error::Numerical("decoded values are not finite".into()));
    }
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP))
}

/// Summary of one pipeline run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub psnr_amp: f64,
    pub psnr_phase: f64,
    /// Mean squared 2D AoA error, degrees squared. `None` when no angles
    /// were estimated.
    pub aoa_mse: Option<f64>,
    pub compression_ratio: f64,
    /// Total fingerprint Hamming distance to the truth, per outer iteration.
    pub hamming_trace: Vec<usize>,
    /// Wall-clock seconds. Kept out of the JSON so reports stay reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("report: {e}")))
    }
}

/// Amplitude and phase PSNR, each computed over the whole stack.
pub fn psnr_pairs(decoded: &[SpectrumPair], truth: &[SpectrumPair]) -> Result<(f64, f64)> {
    if decoded.len() != truth.len() {
        return Err(Error::shape(truth.len(), decoded.len()));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("PSNR of an empty stack".into()));
    }
    for (d, t) in decoded.iter().zip(truth) {
        if d.dim() != t.dim() {
            return Err(Error::shape(t.dim(), d.dim()));
        }
    }
    let cat = |f: &dyn Fn(&SpectrumPair) -> &Array2<f64>, s: &[SpectrumPair]| -> Array1<f64> {
        s.iter().flat_map(|p| f(p).iter().copied()).collect()
    };
    let amp = psnr(&cat(&|p| &p.amplitude, decoded), &cat(&|p| &p.amplitude, truth))?;
    let phase = psnr(&cat(&|p| &p.phase, decoded), &cat(&|p| &p.phase, truth))?;
    Ok((amp, phase))
}

/// Sum over frames of the fingerprint Hamming distance between decoded and
/// truth pairs.
pub fn hamming_total(decoded: &[SpectrumPair], truth: &[SpectrumPair], rx: usize, ry: usize) -> Result<usize> {
    if decoded.len() != truth.len() {
        return Err(Error::shape(truth.len(), decoded.len()));
    }
    decoded.iter().zip(truth).try_fold(0, |acc, (d, t)| {
        Ok(acc + hamming(&fingerprint(d, rx, ry)?, &fingerprint(t, rx, ry)?)?)
    })
}

/// Angles (degrees) estimated from the frame captured at instant `frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleEstimate {
    pub frame: usize,
    pub angles: Vec<(f64, f64)>,
}

/// Smallest total squared angle error over assignments of truth paths to
/// estimates. Each estimate is used at most once while enough remain;
/// with fewer estimates than paths every path takes its nearest estimate.
pub fn assignment_cost(truth: &[(f64, f64)], est: &[(f64, f64)]) -> f64 {
    let cost = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
    if est.len() < truth.len() {
        return truth
            .iter()
            .map(|&t| est.iter().map(|&e| cost(t, e)).fold(f64::INFINITY, f64::min))
            .sum();
    }
    fn search(i: usize, truth: &[(f64, f64)], est: &[(f64, f64)], used: &mut [bool], c: &dyn Fn((f64, f64), (f64, f64)) -> f64) -> f64 {
        if i == truth.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..est.len() {
            if !used[j] {
                used[j] = true;
                best = best.min(c(truth[i], est[j]) + search(i + 1, truth, est, used, c));
                used[j] = false;
            }
        }
        best
    }
    search(0, truth, est, &mut vec![false; est.len()], &cost)
}

/// Mean squared AoA error over every capture instant. Each instant uses
/// the most recent estimate at or before it (the first estimate before any
/// is available); errors are averaged over paths and instants.
pub fn aoa_mse(truth: &[Vec<(f64, f64)>], estimates: &[AngleEstimate]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::InvalidInput("AoA MSE needs at least one instant".into()));
    }
    if estimates.is_empty() || estimates.iter().any(|e| e.angles.is_empty()) {
        return Err(Error::InvalidInput("AoA MSE needs a non-empty estimate for every selected frame".into()));
    }
    if estimates.windows(2).any(|w| w[0].frame >= w[1].frame) {
        return Err(Error::InvalidInput("estimates must be ordered by frame".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    let mut current = 0;
    for (i, paths) in truth.iter().enumerate() {
        while current + 1 < estimates.len() && estimates[current + 1].frame <= i {
            current += 1;
        }
        total += assignment_cost(paths, &estimates[current].angles);
        count += paths.len();
    }
    if count == 0 {
        return Err(Error::InvalidInput("no truth paths".into()));
    }
    Ok(total / count as f64)
}
