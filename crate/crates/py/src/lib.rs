//! Python bindings. Matrices cross the boundary as nested lists of floats.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ndarray::Array2;

use metaspectrum as ms;
use ms::codebook::{gen_codebook, validate_codebook, RisCodebook};
use ms::config::PipelineConfig;
use ms::error::Error;
use ms::scene::{ingest, parse_scene, read_scene_file, simulate, MultipathScene, SpectrumPair};

type Matrix = Vec<Vec<f64>>;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Parse { .. } | Error::InvalidInput(_) | Error::ShapeMismatch { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_rows(m: &Array2<f64>) -> Matrix {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &Matrix) -> PyResult<Array2<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Array2::from_shape_vec((nrows, ncols), rows.concat()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn pair(amp: &Matrix, phase: &Matrix) -> PyResult<SpectrumPair> {
    SpectrumPair::new(from_rows(amp)?, from_rows(phase)?).map_err(py_err)
}

#[pyclass(name = "Scene", module = "metaspectrum")]
struct PyScene(MultipathScene);

#[pymethods]
impl PyScene {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        parse_scene(text, "<string>").map(PyScene).map_err(py_err)
    }

    #[staticmethod]
    fn read(path: std::path::PathBuf) -> PyResult<Self> {
        read_scene_file(path).map(PyScene).map_err(py_err)
    }

    /// (subcarriers, sensors)
    #[getter]
    fn frame_shape(&self) -> (usize, usize) {
        self.0.frame_shape()
    }

    /// Amplitude and unwrapped phase of the CFR frames captured at `rate` Hz.
    #[pyo3(signature = (duration, rate, start = 0.0))]
    fn simulate(&self, duration: f64, rate: f64, start: f64) -> PyResult<Vec<(Matrix, Matrix)>> {
        let frames = simulate(&self.0, start, duration, rate).map_err(py_err)?;
        Ok(frames
            .iter()
            .map(|f| {
                let p = ingest(f);
                (to_rows(&p.amplitude), to_rows(&p.phase))
            })
            .collect())
    }

    fn __repr__(&self) -> String {
        let (k, s) = self.0.frame_shape();
        format!("Scene(subcarriers={k}, sensors={s}, keyframes={})", self.0.keyframes().len())
    }
}

#[pyclass(name = "Codebook", module = "metaspectrum")]
struct PyCodebook(RisCodebook);

#[pymethods]
impl PyCodebook {
    #[new]
    #[pyo3(signature = (k, l, frames, bits = 4, seed = 1))]
    fn new(k: usize, l: usize, frames: usize, bits: u32, seed: u64) -> PyResult<Self> {
        gen_codebook(k, l, frames, bits, seed).map(PyCodebook).map_err(py_err)
    }

    #[getter]
    fn amp_masks(&self) -> Vec<Matrix> {
        self.0.amp_masks.iter().map(to_rows).collect()
    }

    #[getter]
    fn phase_masks(&self) -> Vec<Matrix> {
        self.0.phase_masks.iter().map(to_rows).collect()
    }

    /// Descriptions of any constraint the masks break; empty when valid.
    fn violations(&self) -> Vec<String> {
        let (k, l) = self.0.amp_masks[0].dim();
        validate_codebook(&self.0, k, l, self.0.frames())
            .iter()
            .map(|v| format!("{v:?}"))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.0.frames()
    }
}

/// Masks frames `indices` of `codebook` onto the spectrum pairs and encodes
/// them into one MetaSpectrum pair `(z_amp, z_phase)`.
#[pyfunction]
#[pyo3(signature = (frames, codebook, indices, shift = 1))]
fn encode(frames: Vec<(Matrix, Matrix)>, codebook: &PyCodebook, indices: Vec<usize>, shift: usize) -> PyResult<(Matrix, Matrix)> {
    if frames.len() != indices.len() {
        return Err(PyValueError::new_err("one codebook index per frame"));
    }
    let cb = &codebook.0;
    let mut masked = Vec::with_capacity(frames.len());
    for ((a, p), &i) in frames.iter().zip(&indices) {
        if i >= cb.frames() {
            return Err(PyValueError::new_err(format!("codebook index {i} out of range")));
        }
        masked.push(ms::scene::apply_ris(&pair(a, p)?, &cb.amp_masks[i], &cb.phase_masks[i]).map_err(py_err)?);
    }
    let meta = ms::codec::encode(&masked, cb, &indices, shift).map_err(py_err)?;
    Ok((to_rows(&meta.z_amp), to_rows(&meta.z_phase)))
}

#[pyfunction]
fn compression_ratio(t: usize, d: usize, k: usize) -> f64 {
    ms::codec::compression_ratio(t, d, k)
}

/// 2-bit block fingerprint of a spectrum pair, `rx x ry` cells.
#[pyfunction]
#[pyo3(signature = (amp, phase, rx = 8, ry = 8))]
fn fingerprint(amp: Matrix, phase: Matrix, rx: usize, ry: usize) -> PyResult<Vec<Vec<u8>>> {
    let fp = ms::hash::fingerprint(&pair(&amp, &phase)?, rx, ry).map_err(py_err)?;
    Ok(fp.values().rows().into_iter().map(|r| r.to_vec()).collect())
}

/// Runs simulate, sample, encode, decode and estimate in memory and returns
/// the metrics with the sampled frame indices and the joint MUSIC peaks.
/// `options` holds config keys as in a config file.
#[pyfunction]
#[pyo3(signature = (scene, **options))]
fn run_pipeline<'py>(py: Python<'py>, scene: &PyScene, options: Option<&Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = PipelineConfig::default();
    if let Some(options) = options {
        for (k, v) in options.iter() {
            let key: String = k.extract()?;
            cfg.set(&key, &v.str()?.to_string()).map_err(py_err)?;
        }
    }
    let run = py.detach(|| ms::pipeline::run_pipeline(&scene.0, &cfg)).map_err(py_err)?;
    let out = PyDict::new(py);
    let r = &run.report;
    out.set_item("psnr_amp", r.psnr_amp)?;
    out.set_item("psnr_phase", r.psnr_phase)?;
    out.set_item("aoa_mse", r.aoa_mse)?;
    out.set_item("compression_ratio", r.compression_ratio)?;
    out.set_item("hamming_trace", r.hamming_trace.clone())?;
    out.set_item("indices", run.sampled.indices.clone())?;
    let peaks: Vec<(f64, f64, f64)> = run
        .estimate
        .peaks
        .iter()
        .map(|p| (p.theta.to_degrees(), p.phi.to_degrees(), p.tau * 1e9))
        .collect();
    out.set_item("peaks", peaks)?;
    Ok(out)
}

#[pymodule(name = "metaspectrum")]
fn metaspectrum_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScene>()?;
    m.add_class::<PyCodebook>()?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(compression_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(fingerprint, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
