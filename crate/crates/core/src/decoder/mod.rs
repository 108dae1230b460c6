//! Self-supervised ADMM reconstruction of the fused frames.
//!
//! Each channel (amplitude, phase) is decoded on its own. One outer iteration
//! fits a freshly initialized generator to the measurement and the current
//! consensus point, pulls `x` towards the generator output, then updates the
//! multiplier.

pub mod generator;
pub mod tv;

use std::str::FromStr;

use ndarray::{Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::codebook::RisCodebook;
use crate::codec::{differential_decode, MetaSpectrumPair, SensingOperator};
use crate::error::{Error, Result};
use crate::metrics::psnr;
use crate::scene::SpectrumPair;
use generator::{Architecture, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Denoiser {
    SteepestDescent,
    TotalVariation,
}

impl FromStr for Denoiser {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sd" | "steepest-descent" => Ok(Self::SteepestDescent),
            "tv" | "total-variation" => Ok(Self::TotalVariation),
            _ => Err(Error::InvalidInput(format!("unknown denoiser '{s}' (expected sd or tv)"))),
        }
    }
}

impl Denoiser {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::SteepestDescent => "sd",
            Self::TotalVariation => "tv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prior {
    ConvGenerator,
    /// Plain projection onto the measurement set, no learned prior.
    None,
}

impl FromStr for Prior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv" | "conv-generator" => Ok(Self::ConvGenerator),
            "none" => Ok(Self::None),
            _ => Err(Error::InvalidInput(format!("unknown prior '{s}' (expected conv or none)"))),
        }
    }
}

impl Prior {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ConvGenerator => "conv",
            Self::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeConfig {
    pub beta1: f64,
    pub beta2: f64,
    /// Channel balance weights. The channels are decoded independently, so
    /// these do not change the result.
    pub alpha1: f64,
    pub alpha2: f64,
    pub sd_step: f64,
    pub inner_iters: usize,
    pub theta_iters: usize,
    pub outer_iters: usize,
    pub seed: u64,
    pub denoiser: Denoiser,
    pub prior: Prior,
    pub tv_lambda: f64,
    pub learning_rate: f64,
    /// Half-width of the uniform distribution of the fixed generator input.
    pub noise_amplitude: f64,
    /// Stop when the outer objective improves by less than this fraction.
    pub early_stop: Option<f64>,
    pub architecture: Architecture,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beta1: 0.5,
            beta2: 0.5,
            alpha1: 1.0,
            alpha2: 1.0,
            sd_step: 0.5,
            inner_iters: 600,
            theta_iters: 200,
            outer_iters: 18,
            seed: 0,
            denoiser: Denoiser::SteepestDescent,
            prior: Prior::ConvGenerator,
            tv_lambda: 0.01,
            learning_rate: 0.01,
            noise_amplitude: 0.1,
            early_stop: None,
            architecture: Architecture::default(),
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if !(self.beta1 > 0.0 && self.beta2 > 0.0) {
            return bad("beta1 and beta2 must be positive");
        }
        if !(self.sd_step > 0.0 && self.sd_step < 2.0) {
            return bad("sd_step must lie in (0, 2)");
        }
        if self.inner_iters == 0 || self.theta_iters == 0 || self.outer_iters == 0 {
            return bad("iteration counts must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.noise_amplitude > 0.0 && self.noise_amplitude.is_finite()) {
            return bad("noise_amplitude must be positive");
        }
        if !(self.tv_lambda >= 0.0 && self.tv_lambda.is_finite()) {
            return bad("tv_lambda must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Amplitude,
    Phase,
}

impl Channel {
    fn stream(self) -> u64 {
        match self {
            Self::Amplitude => 1 << 32,
            Self::Phase => 2 << 32,
        }
    }
}

/// Generator weights, its fixed input and the output scale.
#[derive(Debug, Clone)]
pub struct GeneratorState {
    pub network: Network,
    pub params: Vec<f64>,
    pub input: Vec<f64>,
    pub scale: f64,
}

impl GeneratorState {
    pub fn output(&self) -> Result<Array3<f64>> {
        let s = self.network.output_shape();
        let tape = self.network.forward(&self.params, &self.input)?;
        Ok(Array3::from_shape_vec((s.c, s.h, s.w), tape.output().iter().map(|v| v * self.scale).collect())
            .expect("network output matches its shape"))
    }
}

#[derive(Debug, Clone)]
pub struct AdmmState {
    pub x: Array3<f64>,
    pub t: Array3<f64>,
    /// Most recent generator output.
    pub g: Array3<f64>,
    pub generator: Option<GeneratorState>,
}

impl AdmmState {
    pub fn zeros(dim: (usize, usize, usize)) -> Self {
        Self {
            x: Array3::zeros(dim),
            t: Array3::zeros(dim),
            g: Array3::zeros(dim),
            generator: None,
        }
    }
}

/// Objective after the initial evaluation and after every accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub objective: Vec<f64>,
    pub halvings: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn reset(&mut self) {
        self.m.fill(0.0);
        self.v.fill(0.0);
        self.step = 0;
    }

    fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        grad.iter()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .map(|(&g, (m, v))| {
                *m = Self::B1 * *m + (1.0 - Self::B1) * g;
                *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
                (*m / c1) / ((*v / c2).sqrt() + Self::EPS)
            })
            .collect()
    }
}

fn sum_sq(a: &Array3<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Evaluates `|z - Φ G|^2 + beta |x - G - t|^2` for the generator output and
/// returns the objective with its gradient with respect to the raw network
/// output.
fn fit_objective(
    out: &[f64],
    gen: &GeneratorState,
    state: &AdmmState,
    z: &Array2<f64>,
    op: &SensingOperator,
    beta: f64,
) -> Result<(f64, Array3<f64>, Vec<f64>)> {
    let g = Array3::from_shape_vec(state.x.dim(), out.iter().map(|v| v * gen.scale).collect())
        .map_err(|_| Error::shape(state.x.dim(), out.len()))?;
    let r1 = z - &op.forward(&g)?;
    let r2 = &state.x - &g - &state.t;
    let loss = r1.iter().map(|v| v * v).sum::<f64>() + beta * sum_sq(&r2);
    let grad_g = op.adjoint(&r1)? * -2.0 - r2 * (2.0 * beta);
    let grad_out = grad_g.iter().map(|v| v * gen.scale).collect();
    Ok((loss, g, grad_out))
}

/// Runs `cfg.theta_iters` Adam steps on the generator weights. A step that
/// does not lower the objective is halved up to ten times; a step that never
/// lowers it is dropped and the optimizer moments are reset.
pub fn fit_generator(
    state: &mut AdmmState,
    z: &Array2<f64>,
    op: &SensingOperator,
    beta: f64,
    cfg: &DecodeConfig,
) -> Result<FitReport> {
    let mut gen = state
        .generator
        .take()
        .ok_or_else(|| Error::InvalidInput("generator is not initialized".into()))?;
    let net = gen.network.clone();
    let mut tape = net.forward(&gen.params, &gen.input)?;
    let (mut loss, mut g, mut grad_out) = fit_objective(tape.output(), &gen, state, z, op, beta)?;
    if !loss.is_finite() {
        return Err(Error::Numerical("generator objective is not finite".into()));
    }
    let mut report = FitReport {
        objective: vec![loss],
        halvings: 0,
    };
    let mut adam = Adam::new(net.param_count());
    let mut lr = cfg.learning_rate;
    let mut stalls = 0;
    for _ in 0..cfg.theta_iters {
        let (grad, _) = net.backward(&gen.params, &tape, &grad_out)?;
        let dir = adam.direction(&grad);
        let mut step = lr;
        let mut accepted = false;
        let mut any_finite = false;
        for halving in 0..=10 {
            let cand: Vec<f64> = gen.params.iter().zip(&dir).map(|(p, d)| p - step * d).collect();
            let cand_tape = net.forward(&cand, &gen.input)?;
            let (l, cg, cgrad) = fit_objective(cand_tape.output(), &gen, state, z, op, beta)?;
            any_finite |= l.is_finite();
            if l.is_finite() && l <= loss {
                gen.params = cand;
                tape = cand_tape;
                (loss, g, grad_out) = (l, cg, cgrad);
                report.halvings += halving;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if accepted {
            report.objective.push(loss);
            lr = (step * 2.0).min(cfg.learning_rate);
            stalls = 0;
        } else if !any_finite {
            return Err(Error::Numerical("generator objective diverged after 10 step halvings".into()));
        } else {
            adam.reset();
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        }
    }
    state.g = g;
    state.generator = Some(gen);
    Ok(report)
}

/// Pulls `x` towards `G + t` with the configured denoiser.
pub fn update_x(state: &mut AdmmState, cfg: &DecodeConfig) {
    let target = &state.g + &state.t;
    match cfg.denoiser {
        Denoiser::SteepestDescent => {
            for _ in 0..cfg.inner_iters {
                state.x.zip_mut_with(&target, |x, &y| *x -= cfg.sd_step * (*x - y));
            }
        }
        Denoiser::TotalVariation => {
            for (mut x, f) in state.x.axis_iter_mut(Axis(0)).zip(target.axis_iter(Axis(0))) {
                x.assign(&tv::tv_prox(f, cfg.tv_lambda, cfg.inner_iters));
            }
        }
    }
}

/// `t <- t + G - x`.
pub fn update_t(state: &mut AdmmState) {
    state.t += &state.g;
    state.t -= &state.x;
}

/// One diagonal-preconditioned projection `x <- x + Φᵀ (ΦΦᵀ)⁻¹ (z - Φx)`.
/// Measurement rows no frame touches are skipped.
pub fn project_measurements(x: &mut Array3<f64>, z: &Array2<f64>, op: &SensingOperator) -> Result<()> {
    let gram = op.row_gram();
    let mut r = z - &op.forward(x)?;
    r.zip_mut_with(&gram, |v, &d| *v = if d > 0.0 { *v / d } else { 0.0 });
    *x += &op.adjoint(&r)?;
    Ok(())
}

/// Per-iteration record of one decoded channel.
#[derive(Debug, Clone)]
pub struct ChannelTrace {
    pub objective: Vec<f64>,
    pub snapshots: Vec<Array3<f64>>,
}

impl ChannelTrace {
    pub fn final_estimate(&self) -> &Array3<f64> {
        self.snapshots.last().expect("at least one outer iteration")
    }
}

fn fresh_generator(op: &SensingOperator, channel: Channel, iter: usize, cfg: &DecodeConfig, input: &[f64], scale: f64) -> Result<GeneratorState> {
    let (t, k, l) = op.input_dim();
    let network = Network::generator(cfg.architecture, t, k, l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(channel.stream() | iter as u64);
    let params = network.init_params(&mut rng);
    Ok(GeneratorState {
        network,
        params,
        input: input.to_vec(),
        scale,
    })
}

/// Decodes one channel. The result depends only on `(z, op, beta, channel,
/// cfg)`.
pub fn decode_channel(z: &Array2<f64>, op: &SensingOperator, beta: f64, channel: Channel, cfg: &DecodeConfig) -> Result<ChannelTrace> {
    cfg.validate()?;
    if z.dim() != op.output_dim() {
        return Err(Error::shape(op.output_dim(), z.dim()));
    }
    let dim = op.input_dim();
    let mut state = AdmmState::zeros(dim);
    let mut trace = ChannelTrace {
        objective: Vec::new(),
        snapshots: Vec::new(),
    };
    let (input, scale) = if cfg.prior == Prior::ConvGenerator {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(channel.stream() | u32::MAX as u64);
        let uniform = Uniform::new(-cfg.noise_amplitude, cfg.noise_amplitude).expect("valid range");
        let input: Vec<f64> = (0..dim.0 * dim.1 * dim.2).map(|_| uniform.sample(&mut rng)).collect();
        let mut ls = Array3::zeros(dim);
        project_measurements(&mut ls, z, op)?;
        let rms = (sum_sq(&ls) / ls.len() as f64).sqrt();
        (input, if rms > 0.0 { rms } else { 1.0 })
    } else {
        (Vec::new(), 1.0)
    };
    for iter in 0..cfg.outer_iters {
        let objective = match cfg.prior {
            Prior::ConvGenerator => {
                state.generator = Some(fresh_generator(op, channel, iter, cfg, &input, scale)?);
                let fit = fit_generator(&mut state, z, op, beta, cfg)?;
                update_x(&mut state, cfg);
                update_t(&mut state);
                *fit.objective.last().expect("initial objective recorded")
            }
            Prior::None => {
                project_measurements(&mut state.x, z, op)?;
                (z - &op.forward(&state.x)?).iter().map(|v| v * v).sum()
            }
        };
        trace.objective.push(objective);
        trace.snapshots.push(state.x.clone());
        if let (Some(tol), [.., prev, last]) = (cfg.early_stop, trace.objective.as_slice()) {
            if prev - last < tol * prev.abs() {
                break;
            }
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective_amp: f64,
    pub objective_phase: f64,
    pub psnr_amp: Option<f64>,
    pub psnr_phase: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    /// Decoded absolute spectra after the final iteration.
    pub frames: Vec<SpectrumPair>,
    pub trace: Vec<TraceRow>,
    /// Decoded absolute spectra after every outer iteration.
    pub snapshots: Vec<Vec<SpectrumPair>>,
}

/// Splits a `T x K x L` stack into its frames.
pub fn unstack(x: &Array3<f64>) -> Vec<Array2<f64>> {
    x.axis_iter(Axis(0)).map(|f| f.to_owned()).collect()
}

/// Stacks equally shaped frames into `T x K x L`.
pub fn stack(frames: &[Array2<f64>]) -> Result<Array3<f64>> {
    let views: Vec<_> = frames.iter().map(|f| f.view()).collect();
    ndarray::stack(Axis(0), &views).map_err(|e| Error::InvalidInput(format!("cannot stack frames: {e}")))
}

fn decode_stacks(amp: &Array3<f64>, phase: &Array3<f64>) -> Vec<SpectrumPair> {
    let pairs: Vec<_> = unstack(amp).into_iter().zip(unstack(phase)).collect();
    differential_decode(&pairs)
}

/// Stack-wide PSNR of one channel of `decoded` against `truth`.
fn channel_psnr(decoded: &[SpectrumPair], truth: &[SpectrumPair], amplitude: bool) -> Result<f64> {
    let pick = |p: &SpectrumPair| if amplitude { p.amplitude.clone() } else { p.phase.clone() };
    let d: Vec<_> = decoded.iter().map(pick).collect();
    let t: Vec<_> = truth.iter().map(pick).collect();
    psnr(&stack(&d)?, &stack(&t)?)
}

/// Full decode of a MetaSpectrum with the codebook frames named in its
/// header. A codebook other than the one used to encode still decodes, just
/// badly. `truth` (the unmasked absolute spectra) enables PSNR tracing.
pub fn admm_decode(meta: &MetaSpectrumPair, cb: &RisCodebook, cfg: &DecodeConfig, truth: Option<&[SpectrumPair]>) -> Result<DecodeOutput> {
    cfg.validate()?;
    let h = &meta.meta;
    if h.frame_indices.len() != h.t {
        return Err(Error::InvalidInput(format!(
            "header names {} frames but T = {}",
            h.frame_indices.len(),
            h.t
        )));
    }
    let masks = cb.select_amp(&h.frame_indices)?;
    let op = SensingOperator::new(masks, h.d)?;
    if op.input_dim() != (h.t, h.k, h.l) {
        return Err(Error::shape((h.t, h.k, h.l), op.input_dim()));
    }
    if let Some(truth) = truth {
        if truth.len() != h.t || truth.iter().any(|p| p.dim() != (h.k, h.l)) {
            return Err(Error::InvalidInput("ground truth does not match the MetaSpectrum shape".into()));
        }
    }
    let amp = decode_channel(&meta.z_amp, &op, cfg.beta1, Channel::Amplitude, cfg)?;
    let phase = decode_channel(&meta.z_phase, &op, cfg.beta2, Channel::Phase, cfg)?;
    let iters = amp.snapshots.len().min(phase.snapshots.len());
    let mut trace = Vec::with_capacity(iters);
    let mut snapshots = Vec::with_capacity(iters);
    for i in 0..iters {
        let decoded = decode_stacks(&amp.snapshots[i], &phase.snapshots[i]);
        let (psnr_amp, psnr_phase) = match truth {
            Some(t) => (Some(channel_psnr(&decoded, t, true)?), Some(channel_psnr(&decoded, t, false)?)),
            None => (None, None),
        };
        trace.push(TraceRow {
            iter: i + 1,
            objective_amp: amp.objective[i],
            objective_phase: phase.objective[i],
            psnr_amp,
            psnr_phase,
        });
        snapshots.push(decoded);
    }
    let frames = snapshots.last().cloned().expect("at least one outer iteration");
    Ok(DecodeOutput {
        frames,
        trace,
        snapshots,
    })
}
