//! Stage-by-stage orchestration: simulate, sample, encode, decode, estimate
//! and score. Every stage has an in-memory form and a file form that reads
//! and writes containers in an output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::codebook::{gen_codebook_in_range, CodebookId, RisCodebook};
use crate::codec::{compression_ratio, encode, MetaHeader, MetaSpectrumPair};
use crate::config::{PipelineConfig, Sampling};
use crate::container::{join_list, write_atomic, Container, Kind, Payload};
use crate::decoder::{admm_decode, DecodeOutput, TraceRow};
use crate::error::{Error, Result, StageContext};
use crate::hash::{fingerprint, select_frame, HashFingerprint, SegmentBuffer};
use crate::metrics::{aoa_mse, hamming_total, psnr_pairs, AngleEstimate, MetricsReport};
use crate::music::{find_peaks, linspace_step, music_spectrum, ArrayModel, MusicSpectrum, Peak, SteeringGrid};
use crate::scene::{
    apply_ris, ingest, read_scene_file, simulate, ArrayGeometry, CfrFrame, MultipathScene, SpectrumPair,
    SubcarrierGrid,
};

pub const FRAMES_FILE: &str = "frames.mspc";
pub const SAMPLED_FILE: &str = "sampled.mspc";
pub const TRUTH_FILE: &str = "truth.mspc";
pub const FINGERPRINTS_FILE: &str = "fingerprints.mspc";
pub const META_FILE: &str = "meta.mspc";
pub const DECODED_FILE: &str = "decoded.mspc";
pub const TRACE_FILE: &str = "trace.csv";
pub const MUSIC_FILE: &str = "music.mspc";
pub const PEAKS_FILE: &str = "peaks.csv";
pub const TRACKS_FILE: &str = "tracks.csv";
pub const REPORT_FILE: &str = "report.json";

pub const TRACE_HEADER: &str = "iter,objective_amp,objective_phase,psnr_amp,psnr_phase";
pub const PEAKS_HEADER: &str = "theta_deg,phi_deg,tau_ns,magnitude";
pub const TRACKS_HEADER: &str = "frame,time_s,theta_deg,phi_deg,tau_ns,magnitude";

const DEG: f64 = std::f64::consts::PI / 180.0;

pub fn array_model(scene: &MultipathScene) -> ArrayModel {
    ArrayModel {
        geometry: scene.geometry,
        subcarriers: scene.grid.clone(),
        speed: scene.speed,
    }
}

/// Search grid over `[0, 90]` degrees for both angles and `[0, tau_max]`
/// for the delay, with default subarray sizes.
pub fn steering_grid(cfg: &PipelineConfig, model: &ArrayModel) -> Result<SteeringGrid> {
    let angles: Vec<f64> = linspace_step(0.0, 90.0, cfg.angle_step_deg).iter().map(|v| v * DEG).collect();
    let taus = linspace_step(0.0, cfg.tau_max_ns, cfg.tau_step_ns).iter().map(|v| v * 1e-9).collect();
    SteeringGrid::with_default_subarrays(model, angles.clone(), angles, taus)
}

/// One mask per captured frame.
pub fn pipeline_codebook(cfg: &PipelineConfig, k: usize, l: usize, seed: u64) -> Result<RisCodebook> {
    gen_codebook_in_range(k, l, cfg.captured_frames(), cfg.codebook_bits, seed, (cfg.amp_min, cfg.amp_max))
}

/// Selected frames of a capture, one per segment.
#[derive(Debug, Clone)]
pub struct Sampled {
    /// RIS-masked spectra as captured.
    pub masked: Vec<SpectrumPair>,
    /// Unmasked spectra of the same frames.
    pub truth: Vec<SpectrumPair>,
    /// Capture index of every selected frame.
    pub indices: Vec<usize>,
    pub timestamps: Vec<f64>,
    pub fingerprints: Vec<HashFingerprint>,
}

/// Masks every captured frame with its codebook entry and keeps one frame
/// per segment of `segment_len`.
pub fn sample(frames: &[CfrFrame], cb: &RisCodebook, cfg: &PipelineConfig) -> Result<Sampled> {
    let need = cfg.captured_frames();
    if frames.len() != need {
        return Err(Error::InvalidInput(format!(
            "{need} captured frames required (t_frames x segment_len), found {}",
            frames.len()
        )));
    }
    if cb.frames() < need {
        return Err(Error::InvalidInput(format!("codebook has {} frames, {need} required", cb.frames())));
    }
    let mut out = Sampled {
        masked: Vec::new(),
        truth: Vec::new(),
        indices: Vec::new(),
        timestamps: Vec::new(),
        fingerprints: Vec::new(),
    };
    let mut prev: Option<HashFingerprint> = None;
    for seg in 0..cfg.t_frames {
        let base = seg * cfg.segment_len;
        let (index, print) = match cfg.sampling {
            Sampling::Hash => {
                let range = base..base + cfg.segment_len;
                let pairs = range
                    .clone()
                    .map(|i| apply_ris(&ingest(&frames[i]), &cb.amp_masks[i], &cb.phase_masks[i]))
                    .collect::<Result<Vec<_>>>()?;
                let buffer = SegmentBuffer::new(pairs, cb.amp_masks[range.clone()].to_vec(), cb.phase_masks[range].to_vec())?;
                let sel = select_frame(&buffer, prev.as_ref(), cfg.rx, cfg.ry)?;
                (base + sel.index, sel.fingerprint)
            }
            Sampling::Uniform => (base, fingerprint(&ingest(&frames[base]), cfg.rx, cfg.ry)?),
        };
        let truth = ingest(&frames[index]);
        out.masked.push(apply_ris(&truth, &cb.amp_masks[index], &cb.phase_masks[index])?);
        out.truth.push(truth);
        out.indices.push(index);
        out.timestamps.push(frames[index].timestamp);
        out.fingerprints.push(print.clone());
        prev = Some(print);
    }
    Ok(out)
}

/// Decodes with the codebook named in the header, or with `decode_codebook_seed`
/// in its place.
pub fn decode_meta(meta: &MetaSpectrumPair, cfg: &PipelineConfig, truth: Option<&[SpectrumPair]>) -> Result<DecodeOutput> {
    let mut id = meta
        .meta
        .codebook
        .ok_or_else(|| Error::InvalidInput("MetaSpectrum carries no codebook identity".into()))?;
    if let Some(seed) = cfg.decode_codebook_seed {
        id.seed = seed;
    }
    admm_decode(meta, &id.generate()?, &cfg.decode, truth)
}

/// Total fingerprint distance to `truth` after every outer iteration.
pub fn hamming_trace(out: &DecodeOutput, truth: &[SpectrumPair], rx: usize, ry: usize) -> Result<Vec<usize>> {
    out.snapshots.iter().map(|s| hamming_total(s, truth, rx, ry)).collect()
}

/// Peaks of one selected frame.
#[derive(Debug, Clone)]
pub struct Track {
    pub frame: usize,
    pub time: f64,
    pub peaks: Vec<Peak>,
}

#[derive(Debug, Clone)]
pub struct Estimate {
    /// Spectrum over all decoded frames together.
    pub spectrum: MusicSpectrum,
    pub peaks: Vec<Peak>,
    pub tracks: Vec<Track>,
}

fn peaks_or_max(spec: &MusicSpectrum, count: usize) -> Vec<Peak> {
    let peaks = find_peaks(spec, count);
    if !peaks.is_empty() {
        return peaks;
    }
    // a flat spectrum has no strict local maximum
    let (i, j, l) = crate::music::argmax(spec);
    vec![Peak {
        theta: spec.grid.thetas[i],
        phi: spec.grid.phis[j],
        tau: spec.grid.taus[l],
        magnitude: spec.values[[i, j, l]],
        index: (i, j, l),
    }]
}

/// Joint spectrum of all frames plus per-frame peaks.
pub fn estimate(
    decoded: &[SpectrumPair],
    indices: &[usize],
    timestamps: &[f64],
    model: &ArrayModel,
    grid: &SteeringGrid,
    sources: usize,
) -> Result<Estimate> {
    if decoded.len() != indices.len() || decoded.len() != timestamps.len() {
        return Err(Error::InvalidInput(format!(
            "{} frames but {} indices and {} timestamps",
            decoded.len(),
            indices.len(),
            timestamps.len()
        )));
    }
    let complex: Vec<Array2<Complex64>> = decoded.iter().map(SpectrumPair::to_complex).collect();
    let spectrum = music_spectrum(&complex, grid, model, sources)?;
    let peaks = peaks_or_max(&spectrum, sources);
    let mut tracks = Vec::with_capacity(decoded.len());
    for ((frame, &index), &time) in complex.iter().zip(indices).zip(timestamps) {
        let spec = music_spectrum(std::slice::from_ref(frame), grid, model, sources)?;
        tracks.push(Track {
            frame: index,
            time,
            peaks: peaks_or_max(&spec, sources),
        });
    }
    Ok(Estimate { spectrum, peaks, tracks })
}

/// Elevation and azimuth, in degrees, of every active path at each instant.
pub fn truth_angles(scene: &MultipathScene, times: &[f64]) -> Vec<Vec<(f64, f64)>> {
    times
        .iter()
        .map(|&t| scene.paths_at(t).iter().map(|p| (p.elevation / DEG, p.azimuth / DEG)).collect())
        .collect()
}

/// AoA MSE of the tracks against the scene over every captured instant.
pub fn tracks_aoa_mse(tracks: &[Track], scene: &MultipathScene, cfg: &PipelineConfig) -> Result<f64> {
    let times: Vec<f64> = (0..cfg.captured_frames()).map(|i| cfg.start + i as f64 / cfg.rate).collect();
    let estimates: Vec<AngleEstimate> = tracks
        .iter()
        .map(|t| AngleEstimate {
            frame: t.frame,
            angles: t.peaks.iter().map(|p| (p.theta / DEG, p.phi / DEG)).collect(),
        })
        .collect();
    aoa_mse(&truth_angles(scene, &times), &estimates)
}

/// Everything one pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub frames: Vec<CfrFrame>,
    pub sampled: Sampled,
    pub meta: MetaSpectrumPair,
    pub decoded: DecodeOutput,
    pub estimate: Estimate,
    pub report: MetricsReport,
}

/// Runs every stage in memory.
pub fn run_pipeline(scene: &MultipathScene, cfg: &PipelineConfig) -> Result<PipelineRun> {
    let start = Instant::now();
    cfg.validate().stage("config")?;
    let frames = simulate(scene, cfg.start, cfg.duration(), cfg.rate).stage("simulate")?;
    if frames.len() != cfg.captured_frames() {
        return Err(Error::InvalidInput(format!(
            "simulated {} frames, expected {}",
            frames.len(),
            cfg.captured_frames()
        )))
        .stage("simulate");
    }
    let (k, l) = scene.frame_shape();
    let cb = pipeline_codebook(cfg, k, l, cfg.codebook_seed).stage("sample")?;
    let sampled = sample(&frames, &cb, cfg).stage("sample")?;
    let meta = encode(&sampled.masked, &cb, &sampled.indices, cfg.shift_d).stage("encode")?;
    let decoded = decode_meta(&meta, cfg, Some(&sampled.truth)).stage("decode")?;
    let model = array_model(scene);
    let grid = steering_grid(cfg, &model).stage("estimate")?;
    let estimate = estimate(&decoded.frames, &sampled.indices, &sampled.timestamps, &model, &grid, cfg.sources)
        .stage("estimate")?;
    let (psnr_amp, psnr_phase) = psnr_pairs(&decoded.frames, &sampled.truth).stage("metrics")?;
    let report = MetricsReport {
        psnr_amp,
        psnr_phase,
        aoa_mse: Some(tracks_aoa_mse(&estimate.tracks, scene, cfg).stage("metrics")?),
        compression_ratio: compression_ratio(cfg.t_frames, cfg.shift_d, k),
        hamming_trace: hamming_trace(&decoded, &sampled.truth, cfg.rx, cfg.ry).stage("metrics")?,
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok(PipelineRun {
        frames,
        sampled,
        meta,
        decoded,
        estimate,
        report,
    })
}

// ---------------------------------------------------------------------------
// Containers

fn dim32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Container(format!("dimension {v} exceeds u32")))
}

fn push_model(c: &mut Container, model: &ArrayModel) -> Result<()> {
    let g = model.geometry;
    c.push_meta("m", g.m_count)?;
    c.push_meta("n", g.n_count)?;
    c.push_meta("spacing", g.spacing)?;
    c.push_meta("subcarriers", model.subcarriers.len())?;
    c.push_meta("center_frequency", model.subcarriers.center())?;
    c.push_meta("bandwidth", model.subcarriers.spacing() * model.subcarriers.len() as f64)?;
    c.push_meta("speed", model.speed)
}

/// Array model recorded in a container footer.
pub fn model_from_meta(c: &Container) -> Result<ArrayModel> {
    let geometry = ArrayGeometry::new(c.meta_parse("m")?, c.meta_parse("n")?, c.meta_parse("spacing")?)?;
    let subcarriers = SubcarrierGrid::centered(
        c.meta_parse("subcarriers")?,
        c.meta_parse("center_frequency")?,
        c.meta_parse("bandwidth")?,
    )?;
    Ok(ArrayModel {
        geometry,
        subcarriers,
        speed: c.meta_parse("speed")?,
    })
}

fn copy_meta(from: &Container, to: &mut Container, keys: &[&str]) -> Result<()> {
    for key in keys {
        if let Some(v) = from.meta(key) {
            to.push_meta(key, v)?;
        }
    }
    Ok(())
}

const MODEL_KEYS: [&str; 7] = ["m", "n", "spacing", "subcarriers", "center_frequency", "bandwidth", "speed"];
const CAPTURE_KEYS: [&str; 4] = ["rate", "start", "captured", "segment_len"];

/// Frame stack `[frames, K, L, 1]`.
pub fn frames_to_container(frames: &[CfrFrame], model: &ArrayModel, rate: f64, start: f64) -> Result<Container> {
    let (k, l) = (model.subcarriers.len(), model.geometry.sensor_count());
    let mut values = Vec::with_capacity(frames.len() * k * l);
    for f in frames {
        if f.values.dim() != (k, l) {
            return Err(Error::shape((k, l), f.values.dim()));
        }
        values.extend(f.values.iter().copied());
    }
    let mut c = Container::new(
        Kind::CfrFrameStack,
        [dim32(frames.len())?, dim32(k)?, dim32(l)?, 1],
        Payload::Complex(values),
    )?;
    push_model(&mut c, model)?;
    c.push_meta("rate", rate)?;
    c.push_meta("start", start)?;
    c.push_meta("timestamps", join_list(&frames.iter().map(|f| f.timestamp).collect::<Vec<_>>()))?;
    Ok(c)
}

pub fn frames_from_container(c: &Container) -> Result<Vec<CfrFrame>> {
    c.expect_kind(Kind::CfrFrameStack)?;
    let [t, k, l, _] = c.dims_usize();
    let values = c.complex_values()?;
    let times: Vec<f64> = c.meta_list("timestamps")?;
    if times.len() != t {
        return Err(Error::Container(format!("{t} frames but {} timestamps", times.len())));
    }
    Ok(times
        .iter()
        .enumerate()
        .map(|(i, &timestamp)| CfrFrame {
            values: Array2::from_shape_vec((k, l), values[i * k * l..(i + 1) * k * l].to_vec()).expect("sized by dims"),
            timestamp,
        })
        .collect())
}

/// Pair stack `[frames, 2, K, L]`, amplitude first.
pub fn pairs_to_container(pairs: &[SpectrumPair]) -> Result<Container> {
    let (k, l) = pairs.first().map(SpectrumPair::dim).unwrap_or((0, 0));
    let mut values = Vec::with_capacity(pairs.len() * 2 * k * l);
    for p in pairs {
        if p.dim() != (k, l) {
            return Err(Error::shape((k, l), p.dim()));
        }
        values.extend(p.amplitude.iter().copied());
        values.extend(p.phase.iter().copied());
    }
    Container::new(
        Kind::SpectrumPair,
        [dim32(pairs.len())?, 2, dim32(k)?, dim32(l)?],
        Payload::F64(values),
    )
}

pub fn pairs_from_container(c: &Container) -> Result<Vec<SpectrumPair>> {
    c.expect_kind(Kind::SpectrumPair)?;
    let [t, two, k, l] = c.dims_usize();
    if two != 2 {
        return Err(Error::Container(format!("pair stack needs 2 channels, found {two}")));
    }
    let v = c.f64_values()?;
    let n = k * l;
    (0..t)
        .map(|i| {
            let base = 2 * n * i;
            let a = Array2::from_shape_vec((k, l), v[base..base + n].to_vec()).expect("sized by dims");
            let p = Array2::from_shape_vec((k, l), v[base + n..base + 2 * n].to_vec()).expect("sized by dims");
            SpectrumPair::new(a, p)
        })
        .collect()
}

/// MetaSpectrum pair `[2, rows, L, 1]` with the header in the footer.
pub fn meta_to_container(meta: &MetaSpectrumPair) -> Result<Container> {
    let (rows, l) = meta.z_amp.dim();
    let mut values = Vec::with_capacity(2 * rows * l);
    values.extend(meta.z_amp.iter().copied());
    values.extend(meta.z_phase.iter().copied());
    let mut c = Container::new(Kind::MetaSpectrumPair, [2, dim32(rows)?, dim32(l)?, 1], Payload::F64(values))?;
    let h = &meta.meta;
    c.push_meta("k", h.k)?;
    c.push_meta("l", h.l)?;
    c.push_meta("t", h.t)?;
    c.push_meta("d", h.d)?;
    c.push_meta("frame_indices", join_list(&h.frame_indices))?;
    if let Some(id) = h.codebook {
        c.push_meta("codebook_seed", id.seed)?;
        c.push_meta("codebook_bits", id.bits)?;
        c.push_meta("codebook_frames", id.frames)?;
        c.push_meta("amp_min", id.amp_range.0)?;
        c.push_meta("amp_max", id.amp_range.1)?;
    }
    Ok(c)
}

pub fn meta_from_container(c: &Container) -> Result<MetaSpectrumPair> {
    c.expect_kind(Kind::MetaSpectrumPair)?;
    let [two, rows, l, _] = c.dims_usize();
    if two != 2 {
        return Err(Error::Container(format!("MetaSpectrum needs 2 channels, found {two}")));
    }
    let v = c.f64_values()?;
    let n = rows * l;
    let header = MetaHeader {
        k: c.meta_parse("k")?,
        l: c.meta_parse("l")?,
        t: c.meta_parse("t")?,
        d: c.meta_parse("d")?,
        codebook: match c.meta("codebook_seed") {
            Some(_) => {
                let mut id = CodebookId::new(
                    c.meta_parse("codebook_seed")?,
                    c.meta_parse("codebook_bits")?,
                    c.meta_parse("k")?,
                    c.meta_parse("l")?,
                    c.meta_parse("codebook_frames")?,
                );
                id.amp_range = (c.meta_parse("amp_min")?, c.meta_parse("amp_max")?);
                Some(id)
            }
            None => None,
        },
        frame_indices: c.meta_list("frame_indices")?,
    };
    if header.l != l || header.rows() != rows {
        return Err(Error::Container(format!(
            "header implies {} x {} but the payload is {rows} x {l}",
            header.rows(),
            header.l
        )));
    }
    Ok(MetaSpectrumPair {
        z_amp: Array2::from_shape_vec((rows, l), v[..n].to_vec()).expect("sized by dims"),
        z_phase: Array2::from_shape_vec((rows, l), v[n..].to_vec()).expect("sized by dims"),
        meta: header,
    })
}

/// MUSIC pseudo-spectrum `[n_theta, n_phi, n_tau, 1]` with its grid.
pub fn music_to_container(spec: &MusicSpectrum) -> Result<Container> {
    let (a, b, t) = spec.values.dim();
    let mut c = Container::new(
        Kind::MusicSpectrum,
        [dim32(a)?, dim32(b)?, dim32(t)?, 1],
        Payload::F64(spec.values.iter().copied().collect()),
    )?;
    let g = &spec.grid;
    c.push_meta("thetas", join_list(&g.thetas))?;
    c.push_meta("phis", join_list(&g.phis))?;
    c.push_meta("taus", join_list(&g.taus))?;
    c.push_meta("k_sub", g.k_sub)?;
    c.push_meta("m_sub", g.m_sub)?;
    c.push_meta("n_sub", g.n_sub)?;
    Ok(c)
}

pub fn music_from_container(c: &Container) -> Result<MusicSpectrum> {
    c.expect_kind(Kind::MusicSpectrum)?;
    let [a, b, t, _] = c.dims_usize();
    let grid = SteeringGrid::new(
        c.meta_list("thetas")?,
        c.meta_list("phis")?,
        c.meta_list("taus")?,
        c.meta_parse("k_sub")?,
        c.meta_parse("m_sub")?,
        c.meta_parse("n_sub")?,
    )?;
    if grid.dim() != (a, b, t) {
        return Err(Error::Container(format!("grid {:?} does not match dims {:?}", grid.dim(), (a, b, t))));
    }
    Ok(MusicSpectrum {
        values: Array3::from_shape_vec((a, b, t), c.f64_values()?.to_vec()).expect("sized by dims"),
        grid,
    })
}

/// Fingerprint stack `[count, rx, ry, 1]`, one symbol per byte.
pub fn fingerprints_to_container(prints: &[HashFingerprint]) -> Result<Container> {
    let (rx, ry) = prints.first().map(HashFingerprint::dim).unwrap_or((0, 0));
    let mut values = Vec::with_capacity(prints.len() * rx * ry);
    for p in prints {
        if p.dim() != (rx, ry) {
            return Err(Error::shape((rx, ry), p.dim()));
        }
        values.extend(p.values().iter().copied());
    }
    Container::new(
        Kind::Fingerprint,
        [dim32(prints.len())?, dim32(rx)?, dim32(ry)?, 1],
        Payload::U8(values),
    )
}

pub fn fingerprints_from_container(c: &Container) -> Result<Vec<HashFingerprint>> {
    c.expect_kind(Kind::Fingerprint)?;
    let [n, rx, ry, _] = c.dims_usize();
    let v = c.u8_values()?;
    (0..n)
        .map(|i| {
            HashFingerprint::from_values(
                Array2::from_shape_vec((rx, ry), v[i * rx * ry..(i + 1) * rx * ry].to_vec()).expect("sized by dims"),
            )
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = format!("{TRACE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.iter,
            r.objective_amp,
            r.objective_phase,
            opt(r.psnr_amp),
            opt(r.psnr_phase)
        );
    }
    s
}

pub fn peaks_csv(peaks: &[Peak]) -> String {
    let mut s = format!("{PEAKS_HEADER}\n");
    for p in peaks {
        let _ = writeln!(s, "{},{},{},{}", p.theta / DEG, p.phi / DEG, p.tau * 1e9, p.magnitude);
    }
    s
}

pub fn tracks_csv(tracks: &[Track]) -> String {
    let mut s = format!("{TRACKS_HEADER}\n");
    for t in tracks {
        for p in &t.peaks {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                t.frame,
                t.time,
                p.theta / DEG,
                p.phi / DEG,
                p.tau * 1e9,
                p.magnitude
            );
        }
    }
    s
}

// ---------------------------------------------------------------------------
// File stages

fn out_path(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn ensure_out_dir(cfg: &PipelineConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))
}

fn scene_of(cfg: &PipelineConfig) -> Result<MultipathScene> {
    let path = cfg
        .scene
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("no scene file configured".into()))?;
    read_scene_file(path)
}

/// Simulates `duration` seconds of frames at `rate` Hz into `out`; returns
/// the frame count.
pub fn cmd_simulate(scene_path: &Path, duration: f64, rate: f64, start: f64, out: &Path) -> Result<usize> {
    let run = || -> Result<usize> {
        let scene = read_scene_file(scene_path)?;
        let frames = simulate(&scene, start, duration, rate)?;
        frames_to_container(&frames, &array_model(&scene), rate, start)?.write(out)?;
        Ok(frames.len())
    };
    run().stage("simulate")
}

fn sampled_footer(c: &mut Container, cfg: &PipelineConfig, frames: &Container, s: &Sampled) -> Result<()> {
    copy_meta(frames, c, &MODEL_KEYS)?;
    copy_meta(frames, c, &CAPTURE_KEYS[..2])?;
    c.push_meta("captured", cfg.captured_frames())?;
    c.push_meta("segment_len", cfg.segment_len)?;
    c.push_meta("sampling", cfg.sampling.as_str())?;
    c.push_meta("frame_indices", join_list(&s.indices))?;
    c.push_meta("timestamps", join_list(&s.timestamps))
}

fn write_sampled(cfg: &PipelineConfig, frames: &Container, s: &Sampled, id: &CodebookId) -> Result<()> {
    for (name, pairs) in [(SAMPLED_FILE, &s.masked), (TRUTH_FILE, &s.truth)] {
        let mut c = pairs_to_container(pairs)?;
        sampled_footer(&mut c, cfg, frames, s)?;
        if name == SAMPLED_FILE {
            c.push_meta("codebook_seed", id.seed)?;
            c.push_meta("codebook_bits", id.bits)?;
            c.push_meta("amp_min", id.amp_range.0)?;
            c.push_meta("amp_max", id.amp_range.1)?;
        }
        c.write(&out_path(cfg, name))?;
    }
    let mut c = fingerprints_to_container(&s.fingerprints)?;
    c.push_meta("frame_indices", join_list(&s.indices))?;
    c.write(&out_path(cfg, FINGERPRINTS_FILE))
}

/// Reads the frame stack from the output directory and writes the sampled
/// masked pairs, their unmasked truth and their fingerprints.
pub fn cmd_sample(cfg: &PipelineConfig) -> Result<Sampled> {
    let run = || -> Result<Sampled> {
        cfg.validate()?;
        let fc = Container::read(&out_path(cfg, FRAMES_FILE))?;
        let frames = frames_from_container(&fc)?;
        let model = model_from_meta(&fc)?;
        let cb = pipeline_codebook(cfg, model.subcarriers.len(), model.geometry.sensor_count(), cfg.codebook_seed)?;
        let s = sample(&frames, &cb, cfg)?;
        write_sampled(cfg, &fc, &s, &cb.id)?;
        Ok(s)
    };
    run().stage("sample")
}

/// Encodes the sampled pairs into a MetaSpectrum pair.
pub fn cmd_encode(cfg: &PipelineConfig) -> Result<MetaSpectrumPair> {
    let run = || -> Result<MetaSpectrumPair> {
        cfg.validate()?;
        let sc = Container::read(&out_path(cfg, SAMPLED_FILE))?;
        let masked = pairs_from_container(&sc)?;
        let (k, l) = masked
            .first()
            .map(SpectrumPair::dim)
            .ok_or_else(|| Error::InvalidInput("no sampled frames".into()))?;
        let mut id = CodebookId::new(sc.meta_parse("codebook_seed")?, sc.meta_parse("codebook_bits")?, k, l, sc.meta_parse("captured")?);
        id.amp_range = (sc.meta_parse("amp_min")?, sc.meta_parse("amp_max")?);
        let indices: Vec<usize> = sc.meta_list("frame_indices")?;
        let meta = encode(&masked, &id.generate()?, &indices, cfg.shift_d)?;
        let mut c = meta_to_container(&meta)?;
        copy_meta(&sc, &mut c, &MODEL_KEYS)?;
        copy_meta(&sc, &mut c, &CAPTURE_KEYS)?;
        copy_meta(&sc, &mut c, &["timestamps"])?;
        c.write(&out_path(cfg, META_FILE))?;
        Ok(meta)
    };
    run().stage("encode")
}

/// Decodes the MetaSpectrum pair and writes the decoded pairs and the trace
/// CSV. PSNR and Hamming traces are filled in when the truth file exists.
pub fn cmd_decode(cfg: &PipelineConfig) -> Result<DecodeOutput> {
    let run = || -> Result<DecodeOutput> {
        cfg.validate()?;
        let mc = Container::read(&out_path(cfg, META_FILE))?;
        let meta = meta_from_container(&mc)?;
        let truth_path = out_path(cfg, TRUTH_FILE);
        let truth = if truth_path.exists() {
            Some(pairs_from_container(&Container::read(&truth_path)?)?)
        } else {
            None
        };
        let out = decode_meta(&meta, cfg, truth.as_deref())?;
        let mut c = pairs_to_container(&out.frames)?;
        copy_meta(&mc, &mut c, &MODEL_KEYS)?;
        copy_meta(&mc, &mut c, &CAPTURE_KEYS)?;
        copy_meta(&mc, &mut c, &["frame_indices", "timestamps", "t", "d"])?;
        if let Some(truth) = &truth {
            c.push_meta("hamming_trace", join_list(&hamming_trace(&out, truth, cfg.rx, cfg.ry)?))?;
        }
        c.write(&out_path(cfg, DECODED_FILE))?;
        write_atomic(&out_path(cfg, TRACE_FILE), trace_csv(&out.trace).as_bytes())?;
        Ok(out)
    };
    run().stage("decode")
}

/// Runs MUSIC on the decoded pairs and writes the spectrum, peaks and
/// per-frame tracks.
pub fn cmd_estimate(cfg: &PipelineConfig) -> Result<Estimate> {
    let run = || -> Result<Estimate> {
        cfg.validate()?;
        let dc = Container::read(&out_path(cfg, DECODED_FILE))?;
        let est = estimate_container(&dc, cfg)?;
        write_estimate(cfg, &est)?;
        Ok(est)
    };
    run().stage("estimate")
}

fn estimate_container(dc: &Container, cfg: &PipelineConfig) -> Result<Estimate> {
    let decoded = pairs_from_container(dc)?;
    let model = model_from_meta(dc)?;
    let grid = steering_grid(cfg, &model)?;
    estimate(&decoded, &dc.meta_list("frame_indices")?, &dc.meta_list("timestamps")?, &model, &grid, cfg.sources)
}

fn write_estimate(cfg: &PipelineConfig, est: &Estimate) -> Result<()> {
    music_to_container(&est.spectrum)?.write(&out_path(cfg, MUSIC_FILE))?;
    write_atomic(&out_path(cfg, PEAKS_FILE), peaks_csv(&est.peaks).as_bytes())?;
    write_atomic(&out_path(cfg, TRACKS_FILE), tracks_csv(&est.tracks).as_bytes())
}

/// Scores decoded pairs against truth pairs. The AoA error needs the scene
/// and is left out when no scene is configured.
pub fn cmd_metrics(decoded: &Path, truth: &Path, cfg: &PipelineConfig) -> Result<MetricsReport> {
    let run = || -> Result<MetricsReport> {
        let start = Instant::now();
        cfg.validate()?;
        let dc = Container::read(decoded)?;
        let d = pairs_from_container(&dc)?;
        let t = pairs_from_container(&Container::read(truth)?)?;
        let (psnr_amp, psnr_phase) = psnr_pairs(&d, &t)?;
        let hamming_trace = match dc.meta("hamming_trace") {
            Some(_) => dc.meta_list("hamming_trace")?,
            None => vec![hamming_total(&d, &t, cfg.rx, cfg.ry)?],
        };
        let aoa_mse = match &cfg.scene {
            Some(_) => {
                let est = estimate_container(&dc, cfg)?;
                Some(tracks_aoa_mse(&est.tracks, &scene_of(cfg)?, cfg)?)
            }
            None => None,
        };
        let k = d[0].dim().0;
        let (tf, dd) = (dc.meta_parse("t").unwrap_or(d.len()), dc.meta_parse("d").unwrap_or(cfg.shift_d));
        Ok(MetricsReport {
            psnr_amp,
            psnr_phase,
            aoa_mse,
            compression_ratio: compression_ratio(tf, dd, k),
            hamming_trace,
            wall_time: start.elapsed().as_secs_f64(),
        })
    };
    run().stage("metrics")
}

/// Full run from the configured scene file, writing every intermediate
/// artifact and `report.json` to the output directory.
pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<MetricsReport> {
    let scene = scene_of(cfg).stage("simulate")?;
    let run = run_pipeline(&scene, cfg)?;
    write_run(cfg, &scene, &run)?;
    Ok(run.report)
}

/// Writes every artifact of an in-memory run.
pub fn write_run(cfg: &PipelineConfig, scene: &MultipathScene, run: &PipelineRun) -> Result<()> {
    ensure_out_dir(cfg).stage("simulate")?;
    let model = array_model(scene);
    let fc = frames_to_container(&run.frames, &model, cfg.rate, cfg.start).stage("simulate")?;
    fc.write(&out_path(cfg, FRAMES_FILE)).stage("simulate")?;

    let id = run.meta.meta.codebook.expect("encoder records the codebook");
    write_sampled(cfg, &fc, &run.sampled, &id).stage("sample")?;

    let mut mc = meta_to_container(&run.meta).stage("encode")?;
    let write_meta = |mc: &mut Container| -> Result<()> {
        push_model(mc, &model)?;
        mc.push_meta("rate", cfg.rate)?;
        mc.push_meta("start", cfg.start)?;
        mc.push_meta("captured", cfg.captured_frames())?;
        mc.push_meta("segment_len", cfg.segment_len)?;
        mc.push_meta("timestamps", join_list(&run.sampled.timestamps))?;
        mc.write(&out_path(cfg, META_FILE))
    };
    write_meta(&mut mc).stage("encode")?;

    let write_decoded = || -> Result<()> {
        let mut c = pairs_to_container(&run.decoded.frames)?;
        copy_meta(&mc, &mut c, &MODEL_KEYS)?;
        copy_meta(&mc, &mut c, &CAPTURE_KEYS)?;
        copy_meta(&mc, &mut c, &["frame_indices", "timestamps", "t", "d"])?;
        c.push_meta("hamming_trace", join_list(&run.report.hamming_trace))?;
        c.write(&out_path(cfg, DECODED_FILE))?;
        write_atomic(&out_path(cfg, TRACE_FILE), trace_csv(&run.decoded.trace).as_bytes())
    };
    write_decoded().stage("decode")?;
    write_estimate(cfg, &run.estimate).stage("estimate")?;
    write_atomic(&out_path(cfg, REPORT_FILE), run.report.to_json().as_bytes()).stage("metrics")
}
