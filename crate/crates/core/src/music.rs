//! Joint elevation, azimuth and delay estimation with smoothed 3D MUSIC.
//!
//! A snapshot stacks the origin sensor at the first subcarrier of a window,
//! then `k'` subcarriers of x-branch sensors `1..=m'` and `k'` subcarriers of
//! y-branch sensors `1..=n'`. Windows slide along subcarriers only; each
//! window start multiplies every path by its own delay phase, which is what
//! decorrelates coherent paths. The sensor windows stay anchored at the
//! origin so the origin entry remains a valid phase reference.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scene::{ArrayGeometry, SubcarrierGrid};

/// Regularizer added to the projection norm before taking the reciprocal.
pub const MUSIC_EPS: f64 = 1e-12;

/// Array layout, subcarriers and propagation speed of the receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayModel {
    pub geometry: ArrayGeometry,
    pub subcarriers: SubcarrierGrid,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringGrid {
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    pub taus: Vec<f64>,
    pub k_sub: usize,
    pub m_sub: usize,
    pub n_sub: usize,
}

/// `lo, lo + step, ...` up to and including `hi` (within rounding).
pub fn linspace_step(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

impl SteeringGrid {
    pub fn new(thetas: Vec<f64>, phis: Vec<f64>, taus: Vec<f64>, k_sub: usize, m_sub: usize, n_sub: usize) -> Result<Self> {
        for (name, g) in [("theta", &thetas), ("phi", &phis), ("tau", &taus)] {
            if g.is_empty() || g.iter().any(|v| !v.is_finite()) || g.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(format!("{name} grid must be non-empty, finite and increasing")));
            }
        }
        if k_sub == 0 || m_sub == 0 || n_sub == 0 {
            return Err(Error::InvalidInput("subarray sizes must be positive".into()));
        }
        Ok(Self {
            thetas,
            phis,
            taus,
            k_sub,
            m_sub,
            n_sub,
        })
    }

    /// Default subarray sizes `k' = min(16, K/2)`, `m' = M/2 + 1`,
    /// `n' = N/2 + 1` with the given search grids.
    pub fn with_default_subarrays(model: &ArrayModel, thetas: Vec<f64>, phis: Vec<f64>, taus: Vec<f64>) -> Result<Self> {
        let k = model.subcarriers.len();
        let g = model.geometry;
        Self::new(thetas, phis, taus, (k / 2).clamp(1, 16), g.m_count / 2 + 1, g.n_count / 2 + 1)
    }

    /// 5° angle steps over `[0°, 90°]` and 5 ns delay steps over
    /// `[0, 100 ns]`.
    pub fn desk(model: &ArrayModel) -> Result<Self> {
        let deg = PI / 180.0;
        Self::with_default_subarrays(
            model,
            linspace_step(0.0, 90.0, 5.0).iter().map(|v| v * deg).collect(),
            linspace_step(0.0, 90.0, 5.0).iter().map(|v| v * deg).collect(),
            linspace_step(0.0, 100.0, 5.0).iter().map(|v| v * 1e-9).collect(),
        )
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        (self.thetas.len(), self.phis.len(), self.taus.len())
    }

    /// Snapshot length `1 + k'm' + k'n'`.
    pub fn snapshot_len(&self) -> usize {
        1 + self.k_sub * (self.m_sub + self.n_sub)
    }

    fn check(&self, model: &ArrayModel) -> Result<()> {
        let (k, m, n) = (model.subcarriers.len(), model.geometry.m_count, model.geometry.n_count);
        if self.k_sub >= k || self.m_sub >= m || self.n_sub >= n {
            return Err(Error::InvalidInput(format!(
                "subarray ({}, {}, {}) must be smaller than the array ({k}, {m}, {n})",
                self.k_sub, self.m_sub, self.n_sub
            )));
        }
        if k < 2 {
            return Err(Error::InvalidInput("at least two subcarriers are required".into()));
        }
        Ok(())
    }
}

/// Reference frequency of window position `kappa`: the array center
/// frequency offset by the position relative to the window middle.
fn window_frequency(model: &ArrayModel, k_sub: usize, kappa: usize) -> f64 {
    model.subcarriers.center() + (kappa as f64 - (k_sub as f64 - 1.0) / 2.0) * model.subcarriers.spacing()
}

pub fn steering_vector(theta: f64, phi: f64, tau: f64, grid: &SteeringGrid, model: &ArrayModel) -> Result<Vec<Complex64>> {
    grid.check(model)?;
    let u = theta.cos() * phi.sin();
    let v = theta.sin() * phi.sin();
    let d = model.geometry.spacing;
    let df = model.subcarriers.spacing();
    let mut a = Vec::with_capacity(grid.snapshot_len());
    a.push(Complex64::new(1.0, 0.0));
    for (count, dir) in [(grid.m_sub, u), (grid.n_sub, v)] {
        for kappa in 0..grid.k_sub {
            let f = window_frequency(model, grid.k_sub, kappa);
            for mu in 1..=count {
                let phase = -2.0 * PI * (f * mu as f64 * d * dir / model.speed + kappa as f64 * df * tau);
                a.push(Complex64::from_polar(1.0, phase));
            }
        }
    }
    Ok(a)
}

fn snapshot(frame: &Array2<Complex64>, k0: usize, grid: &SteeringGrid, geometry: &ArrayGeometry) -> DVector<Complex64> {
    let mut v = Vec::with_capacity(grid.snapshot_len());
    v.push(frame[[k0, geometry.origin_column()]]);
    for kappa in 0..grid.k_sub {
        for mu in 1..=grid.m_sub {
            v.push(frame[[k0 + kappa, geometry.x_column(mu)]]);
        }
    }
    for kappa in 0..grid.k_sub {
        for nu in 1..=grid.n_sub {
            v.push(frame[[k0 + kappa, geometry.y_column(nu)]]);
        }
    }
    DVector::from_vec(v)
}

/// Average outer product of all subcarrier-window snapshots of all frames.
pub fn smooth_covariance(frames: &[Array2<Complex64>], grid: &SteeringGrid, model: &ArrayModel) -> Result<DMatrix<Complex64>> {
    grid.check(model)?;
    if frames.is_empty() {
        return Err(Error::InvalidInput("no frames to estimate from".into()));
    }
    let shape = (model.subcarriers.len(), model.geometry.sensor_count());
    if let Some(f) = frames.iter().find(|f| f.dim() != shape) {
        return Err(Error::shape(shape, f.dim()));
    }
    let dim = grid.snapshot_len();
    let windows = shape.0 - grid.k_sub + 1;
    let mut r = DMatrix::<Complex64>::zeros(dim, dim);
    for frame in frames {
        for k0 in 0..windows {
            let s = snapshot(frame, k0, grid, &model.geometry);
            r.ger(Complex64::new(1.0, 0.0), &s, &s.conjugate(), Complex64::new(1.0, 0.0));
        }
    }
    Ok(r / Complex64::new((frames.len() * windows) as f64, 0.0))
}

/// Eigenvectors of the `count` largest eigenvalues, as columns.
pub fn signal_subspace(r: &DMatrix<Complex64>, count: usize) -> DMatrix<Complex64> {
    let eig = nalgebra::SymmetricEigen::new(r.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    DMatrix::from_columns(&order[..count].iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>())
}

/// Eigenvectors of the `dim - count` smallest eigenvalues, as columns.
pub fn noise_subspace(r: &DMatrix<Complex64>, count: usize) -> DMatrix<Complex64> {
    let eig = nalgebra::SymmetricEigen::new(r.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    DMatrix::from_columns(&order[count..].iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MusicSpectrum {
    /// Indexed `[theta, phi, tau]`.
    pub values: Array3<f64>,
    pub grid: SteeringGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub theta: f64,
    pub phi: f64,
    pub tau: f64,
    pub magnitude: f64,
    pub index: (usize, usize, usize),
}

/// Pseudo-spectrum `1 / (aᴴ E_N E_Nᴴ a + ε)` over the whole grid.
pub fn music_spectrum(frames: &[Array2<Complex64>], grid: &SteeringGrid, model: &ArrayModel, sources: usize) -> Result<MusicSpectrum> {
    let r = smooth_covariance(frames, grid, model)?;
    if sources == 0 || sources >= r.nrows() {
        return Err(Error::InvalidInput(format!(
            "source count {sources} must lie in 1..{}",
            r.nrows()
        )));
    }
    if r.iter().all(|v| v.norm() == 0.0) {
        return Err(Error::Numerical("covariance is zero; the frames carry no signal".into()));
    }
    let es = signal_subspace(&r, sources);
    let esh = es.adjoint();
    let mut values = Array3::zeros(grid.dim());
    for (i, &theta) in grid.thetas.iter().enumerate() {
        for (j, &phi) in grid.phis.iter().enumerate() {
            for (l, &tau) in grid.taus.iter().enumerate() {
                let a = DVector::from_vec(steering_vector(theta, phi, tau, grid, model)?);
                let proj = (&esh * &a).norm_squared();
                let residual = (a.norm_squared() - proj).max(0.0);
                values[[i, j, l]] = 1.0 / (residual + MUSIC_EPS);
            }
        }
    }
    Ok(MusicSpectrum {
        values,
        grid: grid.clone(),
    })
}

/// Up to `count` strict local maxima over the 26-neighbourhood, largest
/// first; ties keep grid order.
pub fn find_peaks(spec: &MusicSpectrum, count: usize) -> Vec<Peak> {
    let v = &spec.values;
    let (a, b, c) = v.dim();
    let mut peaks = Vec::new();
    for i in 0..a {
        for j in 0..b {
            for l in 0..c {
                let center = v[[i, j, l]];
                let mut is_max = true;
                'n: for di in -1isize..=1 {
                    for dj in -1isize..=1 {
                        for dl in -1isize..=1 {
                            if di == 0 && dj == 0 && dl == 0 {
                                continue;
                            }
                            let (ni, nj, nl) = (i as isize + di, j as isize + dj, l as isize + dl);
                            if ni < 0 || nj < 0 || nl < 0 || ni >= a as isize || nj >= b as isize || nl >= c as isize {
                                continue;
                            }
                            if v[[ni as usize, nj as usize, nl as usize]] >= center {
                                is_max = false;
                                break 'n;
                            }
                        }
                    }
                }
                if is_max {
                    peaks.push(Peak {
                        theta: spec.grid.thetas[i],
                        phi: spec.grid.phis[j],
                        tau: spec.grid.taus[l],
                        magnitude: center,
                        index: (i, j, l),
                    });
                }
            }
        }
    }
    peaks.sort_by(|x, y| y.magnitude.total_cmp(&x.magnitude));
    peaks.truncate(count);
    peaks
}

/// Grid index of the global maximum.
pub fn argmax(spec: &MusicSpectrum) -> (usize, usize, usize) {
    let mut best = ((0, 0, 0), f64::NEG_INFINITY);
    for (idx, &v) in spec.values.indexed_iter() {
        if v > best.1 {
            best = (idx, v);
        }
    }
    best.0
}
