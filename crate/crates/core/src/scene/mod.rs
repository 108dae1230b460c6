//! Ground-truth channel frequency responses for an L-shaped sensor array.
//!
//! Sensor columns are ordered `[x_1 .. x_M, origin, y_1 .. y_N]`. The x-branch
//! sensor `m` sees an extra delay `m d cos(theta) sin(phi) / c`, the y-branch
//! sensor `n` sees `n d sin(theta) sin(phi) / c`, and the origin is the phase
//! reference.

mod file;

pub use file::{format_scene, parse_scene, read_scene_file};

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    /// Sensors on the x-branch, origin excluded.
    pub m_count: usize,
    /// Sensors on the y-branch, origin excluded.
    pub n_count: usize,
    /// Element spacing in meters.
    pub spacing: f64,
}

impl ArrayGeometry {
    pub fn new(m_count: usize, n_count: usize, spacing: f64) -> Result<Self> {
        if m_count == 0 || n_count == 0 {
            return Err(Error::InvalidInput(format!(
                "both array branches need at least one sensor (M={m_count}, N={n_count})"
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sensor spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self {
            m_count,
            n_count,
            spacing,
        })
    }

    /// Geometry with half-wavelength spacing at `center_frequency`.
    pub fn half_wavelength(m_count: usize, n_count: usize, center_frequency: f64, speed: f64) -> Result<Self> {
        Self::new(m_count, n_count, speed / (2.0 * center_frequency))
    }

    /// Total sensor count `M + N + 1`.
    pub fn sensor_count(&self) -> usize {
        self.m_count + self.n_count + 1
    }

    /// Column index of the origin sensor.
    pub fn origin_column(&self) -> usize {
        self.m_count
    }

    /// Column index of x-branch sensor `m` (1-based position).
    pub fn x_column(&self, m: usize) -> usize {
        debug_assert!((1..=self.m_count).contains(&m));
        m - 1
    }

    /// Column index of y-branch sensor `n` (1-based position).
    pub fn y_column(&self, n: usize) -> usize {
        debug_assert!((1..=self.n_count).contains(&n));
        self.m_count + n
    }

    /// Extra path length (meters) at each column for a wave from
    /// `(elevation, azimuth)`, relative to the origin.
    pub fn path_offsets(&self, elevation: f64, azimuth: f64) -> Vec<f64> {
        let ux = elevation.cos() * azimuth.sin();
        let uy = elevation.sin() * azimuth.sin();
        let mut out = Vec::with_capacity(self.sensor_count());
        for m in 1..=self.m_count {
            out.push(m as f64 * self.spacing * ux);
        }
        out.push(0.0);
        for n in 1..=self.n_count {
            out.push(n as f64 * self.spacing * uy);
        }
        out
    }
}

/// Uniform OFDM subcarrier grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcarrierGrid {
    frequencies: Vec<f64>,
}

impl SubcarrierGrid {
    /// `k_count` subcarriers spaced `bandwidth / k_count` apart, centered on
    /// `center_frequency`.
    pub fn centered(k_count: usize, center_frequency: f64, bandwidth: f64) -> Result<Self> {
        if k_count == 0 {
            return Err(Error::InvalidInput("subcarrier count must be at least 1".into()));
        }
        if !(center_frequency.is_finite() && center_frequency > 0.0) {
            return Err(Error::InvalidInput(format!(
                "center frequency must be positive, got {center_frequency}"
            )));
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidInput(format!("bandwidth must be positive, got {bandwidth}")));
        }
        let step = bandwidth / k_count as f64;
        let mid = (k_count as f64 - 1.0) / 2.0;
        let frequencies = (0..k_count)
            .map(|k| center_frequency + (k as f64 - mid) * step)
            .collect();
        Self::from_frequencies(frequencies)
    }

    pub fn from_frequencies(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::InvalidInput("subcarrier grid is empty".into()));
        }
        if frequencies.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return Err(Error::InvalidInput("subcarrier frequencies must be positive and finite".into()));
        }
        if frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("subcarrier frequencies must be strictly increasing".into()));
        }
        Ok(Self { frequencies })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Spacing between the first two subcarriers (0 for a single subcarrier).
    pub fn spacing(&self) -> f64 {
        match self.frequencies.as_slice() {
            [a, b, ..] => b - a,
            _ => 0.0,
        }
    }

    pub fn center(&self) -> f64 {
        let n = self.frequencies.len();
        0.5 * (self.frequencies[0] + self.frequencies[n - 1])
    }
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub alpha: Complex64,
    /// Time of flight, seconds.
    pub tof: f64,
    /// Elevation, radians in `[0, pi/2]`.
    pub elevation: f64,
    /// Azimuth, radians in `[0, pi)`.
    pub azimuth: f64,
}

impl Path {
    pub fn new(alpha: Complex64, tof: f64, elevation: f64, azimuth: f64) -> Self {
        Self {
            alpha,
            tof,
            elevation,
            azimuth,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = self.alpha.re.is_finite()
            && self.alpha.im.is_finite()
            && self.tof.is_finite()
            && self.elevation.is_finite()
            && self.azimuth.is_finite();
        if !finite {
            return Err(Error::InvalidInput(format!("non-finite path parameters: {self:?}")));
        }
        if self.tof < 0.0 {
            return Err(Error::InvalidInput(format!("negative time of flight {}", self.tof)));
        }
        if !(0.0..=PI / 2.0).contains(&self.elevation) {
            return Err(Error::InvalidInput(format!(
                "elevation {} outside [0, pi/2]",
                self.elevation
            )));
        }
        if !(0.0..PI).contains(&self.azimuth) {
            return Err(Error::InvalidInput(format!("azimuth {} outside [0, pi)", self.azimuth)));
        }
        Ok(())
    }
}

/// Path set that becomes active at `start` seconds and holds until the next
/// keyframe.
#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub start: f64,
    pub paths: Vec<Path>,
}

/// Optional additive complex Gaussian noise on generated frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultipathScene {
    keyframes: Vec<Keyframe>,
    pub speed: f64,
    pub geometry: ArrayGeometry,
    pub grid: SubcarrierGrid,
    pub noise: Option<NoiseSpec>,
}

impl MultipathScene {
    /// Static scene: one path set for all time.
    pub fn new(paths: Vec<Path>, geometry: ArrayGeometry, grid: SubcarrierGrid) -> Result<Self> {
        Self::with_trajectory(vec![Keyframe { start: 0.0, paths }], geometry, grid)
    }

    /// Piecewise-constant trajectory; keyframes are sorted by start time.
    pub fn with_trajectory(mut keyframes: Vec<Keyframe>, geometry: ArrayGeometry, grid: SubcarrierGrid) -> Result<Self> {
        if keyframes.is_empty() {
            return Err(Error::InvalidInput("scene has no path sets".into()));
        }
        if keyframes.iter().any(|k| !k.start.is_finite()) {
            return Err(Error::InvalidInput("keyframe start times must be finite".into()));
        }
        keyframes.sort_by(|a, b| a.start.total_cmp(&b.start));
        Ok(Self {
            keyframes,
            speed: SPEED_OF_LIGHT,
            geometry,
            grid,
            noise: None,
        })
    }

    pub fn with_speed(mut self, speed: f64) -> Result<Self> {
        if !(speed.is_finite() && speed > 0.0) {
            return Err(Error::InvalidInput(format!("propagation speed must be positive, got {speed}")));
        }
        self.speed = speed;
        Ok(self)
    }

    pub fn with_noise(mut self, noise: Option<NoiseSpec>) -> Self {
        self.noise = noise;
        self
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    /// Paths active at time `t`.
    pub fn paths_at(&self, t: f64) -> &[Path] {
        let idx = self
            .keyframes
            .iter()
            .rposition(|k| k.start <= t)
            .unwrap_or(0);
        &self.keyframes[idx].paths
    }

    /// `(K, L)` shape of every frame of this scene.
    pub fn frame_shape(&self) -> (usize, usize) {
        (self.grid.len(), self.geometry.sensor_count())
    }
}

/// Complex `K x L` channel matrix at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct CfrFrame {
    pub values: Array2<Complex64>,
    pub timestamp: f64,
}

/// Amplitude and phase spectrums of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPair {
    pub amplitude: Array2<f64>,
    pub phase: Array2<f64>,
}

impl SpectrumPair {
    pub fn new(amplitude: Array2<f64>, phase: Array2<f64>) -> Result<Self> {
        if amplitude.dim() != phase.dim() {
            return Err(Error::shape(amplitude.dim(), phase.dim()));
        }
        Ok(Self { amplitude, phase })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.amplitude.dim()
    }

    /// `amplitude * exp(j phase)`.
    pub fn to_complex(&self) -> Array2<Complex64> {
        Zip::from(&self.amplitude)
            .and(&self.phase)
            .map_collect(|&a, &p| Complex64::from_polar(a, p))
    }
}

/// Evaluates the multipath CFR at time `t`.
pub fn gen_cfr(scene: &MultipathScene, t: f64) -> Result<CfrFrame> {
    let paths = scene.paths_at(t);
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!("no propagation paths active at t={t}")));
    }
    for p in paths {
        p.validate()?;
    }
    let (k_count, l_count) = scene.frame_shape();
    let freqs = scene.grid.frequencies();
    let mut values = Array2::<Complex64>::zeros((k_count, l_count));
    for path in paths {
        let offsets = scene.geometry.path_offsets(path.elevation, path.azimuth);
        for (col, offset) in offsets.iter().enumerate() {
            let delay = path.tof + offset / scene.speed;
            for (k, f) in freqs.iter().enumerate() {
                values[[k, col]] += path.alpha * Complex64::from_polar(1.0, -2.0 * PI * f * delay);
            }
        }
    }
    if let Some(noise) = scene.noise {
        add_noise(&mut values, noise, t);
    }
    Ok(CfrFrame {
        values,
        timestamp: t,
    })
}

fn add_noise(values: &mut Array2<Complex64>, noise: NoiseSpec, t: f64) {
    let power = values.iter().map(|v| v.norm_sqr()).sum::<f64>() / values.len().max(1) as f64;
    let sigma = (power / 10f64.powf(noise.snr_db / 10.0) / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed ^ t.to_bits().rotate_left(17));
    for v in values.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *v += Complex64::new(sigma * re, sigma * im);
    }
}

/// Frames at `rate` Hz for `duration` seconds starting at `start`.
pub fn simulate(scene: &MultipathScene, start: f64, duration: f64, rate: f64) -> Result<Vec<CfrFrame>> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidInput(format!("frame rate must be positive, got {rate}")));
    }
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::InvalidInput(format!("duration must be non-negative, got {duration}")));
    }
    let count = (duration * rate + 1e-9).floor() as usize;
    (0..count)
        .map(|i| gen_cfr(scene, start + i as f64 / rate))
        .collect()
}

/// Entrywise magnitude and argument. The argument lies in `(-pi, pi]`; a
/// zero entry gets phase 0.
pub fn split_spectrums(frame: &CfrFrame) -> SpectrumPair {
    let amplitude = frame.values.mapv(|v| v.norm());
    let phase = frame.values.mapv(|v| {
        if v.norm_sqr() == 0.0 {
            0.0
        } else {
            let a = v.arg();
            if a <= -PI {
                PI
            } else {
                a
            }
        }
    });
    SpectrumPair { amplitude, phase }
}

/// Removes `2 pi` jumps along the subcarrier axis of every sensor column.
pub fn unwrap_subcarriers(phase: &Array2<f64>) -> Array2<f64> {
    let mut out = phase.clone();
    for mut col in out.columns_mut() {
        let mut offset = 0.0;
        let mut prev = col[0];
        for k in 1..col.len() {
            let raw = col[k];
            offset -= 2.0 * PI * ((raw - prev) / (2.0 * PI)).round();
            col[k] = raw + offset;
            prev = raw;
        }
    }
    out
}

/// Splits a frame and unwraps its phase along the subcarrier axis; this is the
/// ingest form used before masking and encoding.
pub fn ingest(frame: &CfrFrame) -> SpectrumPair {
    let mut pair = split_spectrums(frame);
    pair.phase = unwrap_subcarriers(&pair.phase);
    pair
}

/// RIS modulation: Hadamard product on the amplitude, addition on the phase.
pub fn apply_ris(pair: &SpectrumPair, amp_mask: &Array2<f64>, phase_mask: &Array2<f64>) -> Result<SpectrumPair> {
    let dim = pair.dim();
    if amp_mask.dim() != dim {
        return Err(Error::shape(dim, amp_mask.dim()));
    }
    if phase_mask.dim() != dim {
        return Err(Error::shape(dim, phase_mask.dim()));
    }
    Ok(SpectrumPair {
        amplitude: &pair.amplitude * amp_mask,
        phase: &pair.phase + phase_mask,
    })
}
