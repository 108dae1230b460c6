//! Differential encoding, shifting addition and the sensing operator.
//!
//! The differencing axis is the sensor axis (columns). Column-constant RIS
//! responses then factor out of every difference, so the encoded amplitude is
//! `differential(H_A) ∘ Φ_A` and the encoded phase is `differential(H_P) ∘ Φ_A`
//! with the phase response cancelled. Phase differences stay raw reals; they
//! are never rewrapped.

use ndarray::{s, Array2, Array3, ArrayView2, Axis};

use crate::codebook::{CodebookId, RisCodebook};
use crate::error::{Error, Result};
use crate::scene::SpectrumPair;

/// One masked, differentially encoded frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFrame {
    pub amp_diff: Array2<f64>,
    pub phase_diff: Array2<f64>,
    /// Codebook frame index of the capture instant (0-based).
    pub time_index: usize,
}

/// Shape and key metadata that travel with a MetaSpectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaHeader {
    pub k: usize,
    pub l: usize,
    pub t: usize,
    pub d: usize,
    pub codebook: Option<CodebookId>,
    /// Codebook frame index of each fused frame.
    pub frame_indices: Vec<usize>,
}

impl MetaHeader {
    pub fn rows(&self) -> usize {
        self.k + (self.t - 1) * self.d
    }
}

/// The fused amplitude and phase measurements `Z_A`, `Z_P`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaSpectrumPair {
    pub z_amp: Array2<f64>,
    pub z_phase: Array2<f64>,
    pub meta: MetaHeader,
}

/// Column `j` minus column `j-1`; column 0 is kept.
pub fn difference_columns(m: ArrayView2<f64>) -> Array2<f64> {
    let mut out = m.to_owned();
    for j in (1..m.ncols()).rev() {
        let prev = m.column(j - 1);
        let mut col = out.column_mut(j);
        col -= &prev;
    }
    out
}

/// Running sum across columns; inverse of [`difference_columns`].
pub fn integrate_columns(m: ArrayView2<f64>) -> Array2<f64> {
    let mut out = m.to_owned();
    for j in 1..m.ncols() {
        let (left, mut right) = out.multi_slice_mut((s![.., j - 1], s![.., j]));
        right += &left;
    }
    out
}

fn is_column_constant(m: &Array2<f64>) -> bool {
    (1..m.ncols()).all(|j| m.column(j) == m.column(0))
}

/// Encodes one RIS-masked spectrum pair captured under `amp_mask`/`phase_mask`.
pub fn differential_encode(
    masked: &SpectrumPair,
    amp_mask: &Array2<f64>,
    phase_mask: &Array2<f64>,
    time_index: usize,
) -> Result<EncodedFrame> {
    let dim = masked.dim();
    if amp_mask.dim() != dim || phase_mask.dim() != dim {
        return Err(Error::shape(dim, (amp_mask.dim(), phase_mask.dim())));
    }
    if !is_column_constant(amp_mask) || !is_column_constant(phase_mask) {
        return Err(Error::InvalidInput(
            "RIS masks must be column-constant for the differential factorization to hold".into(),
        ));
    }
    Ok(encode_unchecked(masked, amp_mask, phase_mask, time_index))
}

fn encode_unchecked(masked: &SpectrumPair, amp_mask: &Array2<f64>, phase_mask: &Array2<f64>, time_index: usize) -> EncodedFrame {
    let amp_diff = difference_columns(masked.amplitude.view());
    let mut phase_diff = difference_columns(masked.phase.view());
    {
        let mut first = phase_diff.column_mut(0);
        first -= &phase_mask.column(0);
    }
    phase_diff *= amp_mask;
    EncodedFrame {
        amp_diff,
        phase_diff,
        time_index,
    }
}

/// Zero-pads frame `i` with `i*d` rows above and `(T-1-i)*d` below and sums.
pub fn shift_add_matrices(frames: &[ArrayView2<f64>], d: usize) -> Result<Array2<f64>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidInput("shift-add needs at least one frame".into()))?;
    let (k, l) = first.dim();
    if let Some(bad) = frames.iter().find(|f| f.dim() != (k, l)) {
        return Err(Error::shape((k, l), bad.dim()));
    }
    let t = frames.len();
    let mut z = Array2::zeros((k + (t - 1) * d, l));
    for (i, f) in frames.iter().enumerate() {
        let mut block = z.slice_mut(s![i * d..i * d + k, ..]);
        block += f;
    }
    Ok(z)
}

/// Fuses `T` encoded frames into one MetaSpectrum pair.
pub fn shift_add(frames: &[EncodedFrame], d: usize) -> Result<MetaSpectrumPair> {
    if d == 0 {
        return Err(Error::InvalidInput("shift step D must be at least 1".into()));
    }
    let amps: Vec<_> = frames.iter().map(|f| f.amp_diff.view()).collect();
    let phases: Vec<_> = frames.iter().map(|f| f.phase_diff.view()).collect();
    if let Some(bad) = frames.iter().find(|f| f.amp_diff.dim() != f.phase_diff.dim()) {
        return Err(Error::shape(bad.amp_diff.dim(), bad.phase_diff.dim()));
    }
    let z_amp = shift_add_matrices(&amps, d)?;
    let z_phase = shift_add_matrices(&phases, d)?;
    let (k, l) = frames[0].amp_diff.dim();
    Ok(MetaSpectrumPair {
        z_amp,
        z_phase,
        meta: MetaHeader {
            k,
            l,
            t: frames.len(),
            d,
            codebook: None,
            frame_indices: frames.iter().map(|f| f.time_index).collect(),
        },
    })
}

/// Encodes the masked pairs captured at codebook frames `indices` into one
/// MetaSpectrum bound to `codebook`.
pub fn encode(masked: &[SpectrumPair], codebook: &RisCodebook, indices: &[usize], d: usize) -> Result<MetaSpectrumPair> {
    if masked.len() != indices.len() {
        return Err(Error::InvalidInput(format!(
            "{} spectrum pairs but {} frame indices",
            masked.len(),
            indices.len()
        )));
    }
    let mut frames = Vec::with_capacity(masked.len());
    for (pair, &idx) in masked.iter().zip(indices) {
        let amp = codebook.amp_masks.get(idx).ok_or_else(|| {
            Error::InvalidInput(format!("frame index {idx} outside codebook of {} frames", codebook.frames()))
        })?;
        frames.push(differential_encode(pair, amp, &codebook.phase_masks[idx], idx)?);
    }
    let mut meta = shift_add(&frames, d)?;
    meta.meta.codebook = Some(codebook.id);
    Ok(meta)
}

/// Column-wise prefix sums of each estimated differential pair.
pub fn differential_decode(frames: &[(Array2<f64>, Array2<f64>)]) -> Vec<SpectrumPair> {
    frames
        .iter()
        .map(|(a, p)| SpectrumPair {
            amplitude: integrate_columns(a.view()),
            phase: integrate_columns(p.view()),
        })
        .collect()
}

/// Fraction of the original element count kept by the MetaSpectrum pair.
pub fn compression_ratio(t: usize, d: usize, k: usize) -> f64 {
    let t = t as f64;
    1.0 / t + (1.0 - 1.0 / t) * d as f64 / k as f64
}

/// Matrix-free sensing operator: mask every frame, shift frame `i` down by
/// `i*d` rows and sum.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingOperator {
    masks: Vec<Array2<f64>>,
    shift: usize,
    k: usize,
    l: usize,
}

impl SensingOperator {
    pub fn new(masks: Vec<Array2<f64>>, shift: usize) -> Result<Self> {
        let (k, l) = masks
            .first()
            .ok_or_else(|| Error::InvalidInput("sensing operator needs at least one mask".into()))?
            .dim();
        if let Some(bad) = masks.iter().find(|m| m.dim() != (k, l)) {
            return Err(Error::shape((k, l), bad.dim()));
        }
        if shift == 0 {
            return Err(Error::InvalidInput("shift step D must be at least 1".into()));
        }
        Ok(Self { masks, shift, k, l })
    }

    pub fn frames(&self) -> usize {
        self.masks.len()
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn masks(&self) -> &[Array2<f64>] {
        &self.masks
    }

    /// `(T, K, L)`.
    pub fn input_dim(&self) -> (usize, usize, usize) {
        (self.masks.len(), self.k, self.l)
    }

    /// `(K + (T-1) D, L)`.
    pub fn output_dim(&self) -> (usize, usize) {
        (self.k + (self.masks.len() - 1) * self.shift, self.l)
    }

    pub fn forward(&self, x: &Array3<f64>) -> Result<Array2<f64>> {
        if x.dim() != self.input_dim() {
            return Err(Error::shape(self.input_dim(), x.dim()));
        }
        let mut z = Array2::zeros(self.output_dim());
        for (i, (frame, mask)) in x.axis_iter(Axis(0)).zip(&self.masks).enumerate() {
            let mut block = z.slice_mut(s![i * self.shift..i * self.shift + self.k, ..]);
            block.zip_mut_with(&(&frame * mask), |a, b| *a += b);
        }
        Ok(z)
    }

    pub fn adjoint(&self, z: &Array2<f64>) -> Result<Array3<f64>> {
        if z.dim() != self.output_dim() {
            return Err(Error::shape(self.output_dim(), z.dim()));
        }
        let mut x = Array3::zeros(self.input_dim());
        for (i, (mut frame, mask)) in x.axis_iter_mut(Axis(0)).zip(&self.masks).enumerate() {
            let block = z.slice(s![i * self.shift..i * self.shift + self.k, ..]);
            frame.assign(&(&block * mask));
        }
        Ok(x)
    }

    /// Diagonal of `Φ Φᵀ`. Each unknown feeds exactly one measurement, so the
    /// Gram matrix of the rows is diagonal.
    pub fn row_gram(&self) -> Array2<f64> {
        let mut g = Array2::zeros(self.output_dim());
        for (i, mask) in self.masks.iter().enumerate() {
            let mut block = g.slice_mut(s![i * self.shift..i * self.shift + self.k, ..]);
            block.zip_mut_with(mask, |a, m| *a += m * m);
        }
        g
    }
}
