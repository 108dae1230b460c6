//! RIS amplitude/phase response matrices used as the coded aperture.
//!
//! Every transmissive element shares one hardware structure, so each mask is
//! column-constant: one response per subcarrier, replicated across all `L`
//! sensors. Responses are quantized to `2^bits` levels. A codebook is fully
//! determined by [`CodebookId`] and is regenerated on demand instead of stored.

use std::f64::consts::PI;
use std::fmt;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Everything needed to regenerate a codebook.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodebookId {
    pub seed: u64,
    pub bits: u32,
    pub k: usize,
    pub l: usize,
    pub frames: usize,
    /// Amplitude levels are `lo + (hi - lo) * i / 2^bits` for `i = 1..=2^bits`.
    pub amp_range: (f64, f64),
}

impl CodebookId {
    pub fn new(seed: u64, bits: u32, k: usize, l: usize, frames: usize) -> Self {
        Self {
            seed,
            bits,
            k,
            l,
            frames,
            amp_range: (0.0, 1.0),
        }
    }

    pub fn generate(&self) -> Result<RisCodebook> {
        gen_codebook_in_range(self.k, self.l, self.frames, self.bits, self.seed, self.amp_range)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RisCodebook {
    pub amp_masks: Vec<Array2<f64>>,
    pub phase_masks: Vec<Array2<f64>>,
    pub id: CodebookId,
}

impl RisCodebook {
    pub fn frames(&self) -> usize {
        self.amp_masks.len()
    }

    /// Amplitude masks at the given frame indices (0-based).
    pub fn select_amp(&self, indices: &[usize]) -> Result<Vec<Array2<f64>>> {
        indices
            .iter()
            .map(|&i| {
                self.amp_masks.get(i).cloned().ok_or_else(|| {
                    Error::InvalidInput(format!("frame index {i} outside codebook of {} frames", self.frames()))
                })
            })
            .collect()
    }
}

pub fn gen_codebook(k: usize, l: usize, frames: usize, bits: u32, seed: u64) -> Result<RisCodebook> {
    gen_codebook_in_range(k, l, frames, bits, seed, (0.0, 1.0))
}

pub fn gen_codebook_in_range(
    k: usize,
    l: usize,
    frames: usize,
    bits: u32,
    seed: u64,
    amp_range: (f64, f64),
) -> Result<RisCodebook> {
    if k == 0 || l == 0 || frames == 0 {
        return Err(Error::InvalidInput(format!(
            "codebook dimensions must be positive (K={k}, L={l}, T={frames})"
        )));
    }
    if !(1..=16).contains(&bits) {
        return Err(Error::InvalidInput(format!("bit depth must be in 1..=16, got {bits}")));
    }
    let (lo, hi) = amp_range;
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
        return Err(Error::InvalidInput(format!("invalid amplitude range ({lo}, {hi}]")));
    }
    let levels = 1u32 << bits;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut amp_masks = Vec::with_capacity(frames);
    let mut phase_masks = Vec::with_capacity(frames);
    for _ in 0..frames {
        let mut amp = Array2::zeros((k, l));
        let mut phase = Array2::zeros((k, l));
        for row in 0..k {
            let a = amp_level(rng.random_range(1..=levels), bits, amp_range);
            let p = phase_level(rng.random_range(0..levels), bits);
            amp.row_mut(row).fill(a);
            phase.row_mut(row).fill(p);
        }
        amp_masks.push(amp);
        phase_masks.push(phase);
    }
    Ok(RisCodebook {
        amp_masks,
        phase_masks,
        id: CodebookId {
            seed,
            bits,
            k,
            l,
            frames,
            amp_range,
        },
    })
}

fn amp_level(i: u32, bits: u32, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * i as f64 / (1u64 << bits) as f64
}

fn phase_level(i: u32, bits: u32) -> f64 {
    2.0 * PI * i as f64 / (1u64 << bits) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    FrameCount { expected: usize, found: usize },
    Shape { frame: usize, phase: bool, found: (usize, usize) },
    NonPositive { frame: usize, row: usize, col: usize },
    ColumnConstancy { frame: usize, phase: bool, col: usize },
    AmplitudeLevel { frame: usize, row: usize, value: f64 },
    PhaseLevel { frame: usize, row: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let which = |phase: &bool| if *phase { "phase" } else { "amplitude" };
        match self {
            Violation::FrameCount { expected, found } => write!(f, "expected {expected} frames, found {found}"),
            Violation::Shape { frame, phase, found } => {
                write!(f, "frame {frame}: {} mask has shape {found:?}", which(phase))
            }
            Violation::NonPositive { frame, row, col } => {
                write!(f, "frame {frame}: amplitude at ({row}, {col}) is not strictly positive")
            }
            Violation::ColumnConstancy { frame, phase, col } => {
                write!(f, "frame {frame}: {} column {col} differs from column 0", which(phase))
            }
            Violation::AmplitudeLevel { frame, row, value } => {
                write!(f, "frame {frame}: amplitude {value} at row {row} is not a quantized level")
            }
            Violation::PhaseLevel { frame, row, value } => {
                write!(f, "frame {frame}: phase {value} at row {row} is not a quantized level")
            }
        }
    }
}

/// Reports every violated invariant; an empty list means the codebook is valid.
pub fn validate_codebook(cb: &RisCodebook, k: usize, l: usize, frames: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    if cb.amp_masks.len() != frames || cb.phase_masks.len() != frames {
        out.push(Violation::FrameCount {
            expected: frames,
            found: cb.amp_masks.len().min(cb.phase_masks.len()),
        });
    }
    let levels = (1u64 << cb.id.bits.min(16)) as f64;
    let (lo, hi) = cb.id.amp_range;
    for (t, (amp, phase)) in cb.amp_masks.iter().zip(&cb.phase_masks).enumerate() {
        let mut shaped = true;
        for (mask, is_phase) in [(amp, false), (phase, true)] {
            if mask.dim() != (k, l) {
                out.push(Violation::Shape {
                    frame: t,
                    phase: is_phase,
                    found: mask.dim(),
                });
                shaped = false;
            }
        }
        if !shaped {
            continue;
        }
        for ((row, col), &v) in amp.indexed_iter() {
            if !(v > 0.0) {
                out.push(Violation::NonPositive { frame: t, row, col });
            }
        }
        for (mask, is_phase) in [(amp, false), (phase, true)] {
            for col in 1..l {
                if mask.column(col) != mask.column(0) {
                    out.push(Violation::ColumnConstancy {
                        frame: t,
                        phase: is_phase,
                        col,
                    });
                }
            }
        }
        for row in 0..k {
            let a = amp[[row, 0]];
            let ia = (a - lo) / (hi - lo) * levels;
            if !(ia.round() >= 1.0 && ia.round() <= levels && (ia - ia.round()).abs() < 1e-9) {
                out.push(Violation::AmplitudeLevel { frame: t, row, value: a });
            }
            let p = phase[[row, 0]];
            let ip = p / (2.0 * PI) * levels;
            if !(ip.round() >= 0.0 && ip.round() < levels && (ip - ip.round()).abs() < 1e-9) {
                out.push(Violation::PhaseLevel { frame: t, row, value: p });
            }
        }
    }
    out
}
