//! Pipeline configuration: `key = value` lines, `#` comments.
//!
//! ```text
//! scene = desk.scene
//! t_frames = 10
//! segment_len = 10
//! sampling = hash
//! codebook_seed = 7
//! outer_iters = 18
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::decoder::{DecodeConfig, Denoiser, Prior};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Pick the frame with the largest fingerprint change in each segment.
    Hash,
    /// Pick the first frame of each segment.
    Uniform,
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hash" => Ok(Self::Hash),
            "uniform" => Ok(Self::Uniform),
            _ => Err(Error::InvalidInput(format!("unknown sampling '{s}' (expected hash or uniform)"))),
        }
    }
}

impl Sampling {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Hash => "hash",
            Self::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub scene: Option<PathBuf>,
    /// Frames fused into one MetaSpectrum (one per segment).
    pub t_frames: usize,
    pub shift_d: usize,
    /// Captured frames per segment.
    pub segment_len: usize,
    /// Capture rate in Hz.
    pub rate: f64,
    pub start: f64,
    pub codebook_seed: u64,
    pub codebook_bits: u32,
    /// Amplitude levels span `(amp_min, amp_max]`.
    pub amp_min: f64,
    pub amp_max: f64,
    /// Codebook seed used for decoding when it differs from the encoder's.
    pub decode_codebook_seed: Option<u64>,
    pub sampling: Sampling,
    pub decode: DecodeConfig,
    pub rx: usize,
    pub ry: usize,
    /// Paths sought by the estimator.
    pub sources: usize,
    pub angle_step_deg: f64,
    pub tau_max_ns: f64,
    pub tau_step_ns: f64,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scene: None,
            t_frames: 10,
            shift_d: 1,
            segment_len: 10,
            rate: 100.0,
            start: 0.0,
            codebook_seed: 1,
            codebook_bits: 4,
            amp_min: 0.0,
            amp_max: 1.0,
            decode_codebook_seed: None,
            sampling: Sampling::Hash,
            decode: DecodeConfig::default(),
            rx: 8,
            ry: 8,
            sources: 1,
            angle_step_deg: 5.0,
            tau_max_ns: 100.0,
            tau_step_ns: 5.0,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidInput(format!("invalid value '{value}' for {key}")))
}

impl PipelineConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let d = &mut self.decode;
        match key {
            "scene" => self.scene = Some(PathBuf::from(value)),
            "t_frames" => self.t_frames = parse(key, value)?,
            "shift_d" => self.shift_d = parse(key, value)?,
            "segment_len" => self.segment_len = parse(key, value)?,
            "rate" => self.rate = parse(key, value)?,
            "start" => self.start = parse(key, value)?,
            "codebook_seed" => self.codebook_seed = parse(key, value)?,
            "codebook_bits" => self.codebook_bits = parse(key, value)?,
            "amp_min" => self.amp_min = parse(key, value)?,
            "amp_max" => self.amp_max = parse(key, value)?,
            "decode_codebook_seed" => self.decode_codebook_seed = Some(parse(key, value)?),
            "sampling" => self.sampling = value.parse()?,
            "seed" => d.seed = parse(key, value)?,
            "beta1" => d.beta1 = parse(key, value)?,
            "beta2" => d.beta2 = parse(key, value)?,
            "alpha1" => d.alpha1 = parse(key, value)?,
            "alpha2" => d.alpha2 = parse(key, value)?,
            "sd_step" => d.sd_step = parse(key, value)?,
            "inner_iters" => d.inner_iters = parse(key, value)?,
            "theta_iters" => d.theta_iters = parse(key, value)?,
            "outer_iters" => d.outer_iters = parse(key, value)?,
            "denoiser" => d.denoiser = value.parse::<Denoiser>()?,
            "prior" => d.prior = value.parse::<Prior>()?,
            "tv_lambda" => d.tv_lambda = parse(key, value)?,
            "learning_rate" => d.learning_rate = parse(key, value)?,
            "noise_amplitude" => d.noise_amplitude = parse(key, value)?,
            "early_stop" => d.early_stop = Some(parse(key, value)?),
            "rx" => self.rx = parse(key, value)?,
            "ry" => self.ry = parse(key, value)?,
            "sources" => self.sources = parse(key, value)?,
            "angle_step_deg" => self.angle_step_deg = parse(key, value)?,
            "tau_max_ns" => self.tau_max_ns = parse(key, value)?,
            "tau_step_ns" => self.tau_step_ns = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(Error::InvalidInput(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn parse_str(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let wrap = |message: String| Error::Parse {
                origin: origin.to_string(),
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| wrap(format!("expected key = value, found '{line}'")))?;
            cfg.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::InvalidInput(m) => wrap(m),
                other => wrap(other.to_string()),
            })?;
        }
        Ok(cfg)
    }

    /// Reads a config file. A relative `scene` path is resolved against the
    /// config file's directory.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse_str(&text, &path.display().to_string())?;
        if let (Some(scene), Some(dir)) = (&cfg.scene, path.parent()) {
            if scene.is_relative() {
                cfg.scene = Some(dir.join(scene));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.t_frames == 0 || self.segment_len == 0 {
            return bad("t_frames and segment_len must be at least 1".into());
        }
        if self.shift_d == 0 {
            return bad("shift_d must be at least 1".into());
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return bad(format!("rate must be positive, got {}", self.rate));
        }
        if self.codebook_bits == 0 || self.codebook_bits > 16 {
            return bad(format!("codebook_bits must lie in 1..=16, got {}", self.codebook_bits));
        }
        if !(self.amp_min >= 0.0 && self.amp_max > self.amp_min && self.amp_max.is_finite()) {
            return bad(format!("amplitude range ({}, {}] is invalid", self.amp_min, self.amp_max));
        }
        if self.rx == 0 || self.ry == 0 || self.sources == 0 {
            return bad("rx, ry and sources must be positive".into());
        }
        if !(self.angle_step_deg > 0.0 && self.tau_step_ns > 0.0 && self.tau_max_ns >= 0.0) {
            return bad("estimation grid steps must be positive".into());
        }
        self.decode.validate()
    }

    /// Frames captured for one MetaSpectrum.
    pub fn captured_frames(&self) -> usize {
        self.t_frames * self.segment_len
    }

    /// Capture duration in seconds.
    pub fn duration(&self) -> f64 {
        self.captured_frames() as f64 / self.rate
    }
}
