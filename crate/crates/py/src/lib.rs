//! Python bindings. Maps cross the boundary as nested lists: `[row][col]` for scalar maps and
//! `[row][col][channel]` for colour frames, values as floats.

use std::path::Path;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sgfcn::fixmap::{accumulate_fixation_map, FrameFixation, GaussianSplatParams};
use sgfcn::metrics::{self, FixationSet};
use sgfcn::net::{build_sgf, NetScale, ParamStore, Variant};
use sgfcn::opb::{opb_pipeline, OpbParams};
use sgfcn::pipeline::LoadedModel;
use sgfcn::synth::{generate_synthetic, SyntheticSpec};
use sgfcn::train;
use sgfcn::{Error, RgbFrame, ScalarField};

type Map = Vec<Vec<f64>>;
type Frame = Vec<Vec<[f64; 3]>>;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(format!("{}: {e}", e.kind())),
    }
}

fn to_field(m: &Map) -> PyResult<ScalarField> {
    let h = m.len();
    let w = m.first().map_or(0, Vec::len);
    if m.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("ragged map rows"));
    }
    ScalarField::from_vec(h, w, m.concat()).map_err(py_err)
}

fn from_field(f: &ScalarField) -> Map {
    f.values().chunks(f.width()).map(<[f64]>::to_vec).collect()
}

fn to_frame(m: &Frame) -> PyResult<RgbFrame> {
    let h = m.len();
    let w = m.first().map_or(0, Vec::len);
    if h == 0 || w == 0 || m.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("frame must be a non-empty rectangular [row][col][rgb] list"));
    }
    Ok(RgbFrame::from_fn(h, w, |r, c| m[r][c]))
}

fn points(p: &[(usize, usize)]) -> FixationSet {
    FixationSet { frame_index: 0, points: p.to_vec() }
}

/// Sum of Gaussian splats at `(x, y)` video-pixel fixations.
#[pyfunction]
#[pyo3(signature = (fixations, height, width, window=35, alpha=1.0, beta=3.0))]
fn fixation_map(fixations: Vec<(f64, f64)>, height: usize, width: usize, window: usize, alpha: f64, beta: f64) -> PyResult<Map> {
    let fs: Vec<FrameFixation> = fixations.iter().map(|&(x, y)| FrameFixation { frame_index: 0, x, y, subject_id: 0 }).collect();
    let p = GaussianSplatParams { window_w: window, alpha, beta };
    accumulate_fixation_map(&fs, &p, height, width).map(|f| from_field(&f)).map_err(py_err)
}

/// 8-bit storage form of a map (min-max rescale).
#[pyfunction]
fn quantize_map(map: Map) -> PyResult<Vec<u8>> {
    Ok(sgfcn::fixmap::quantize_map(&to_field(&map)?))
}

/// Boundary map of `cur` given the preceding frame and optionally the previous boundary.
#[pyfunction]
#[pyo3(signature = (prev, cur, prev_boundary=None))]
fn opb_boundary(prev: Frame, cur: Frame, prev_boundary: Option<Map>) -> PyResult<Map> {
    let pb = prev_boundary.as_ref().map(to_field).transpose()?;
    let b = opb_pipeline(&to_frame(&prev)?, &to_frame(&cur)?, pb.as_ref(), &OpbParams::default()).map_err(py_err)?;
    Ok(from_field(&b))
}

/// One SGF network with its parameters.
#[pyclass(name = "Model")]
struct PyModel {
    inner: LoadedModel,
}

#[pymethods]
impl PyModel {
    /// Freshly initialized variant ("sgf1", "sgf2", "sgf3" or "sgfe") at the given frame size.
    #[staticmethod]
    #[pyo3(signature = (variant, height=64, width=64, seed=0))]
    fn init(variant: &str, height: usize, width: usize, seed: u64) -> PyResult<Self> {
        let v: Variant = variant.parse().map_err(py_err)?;
        let spec = build_sgf(v, NetScale::desk(height, width)).map_err(py_err)?;
        let params = ParamStore::init(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(py_err)?;
        Ok(PyModel { inner: LoadedModel::new(params).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyModel { inner: LoadedModel::load(Path::new(path)).map_err(py_err)? })
    }

    /// Writes the manifest at `path` and the blob next to it; returns the blob path.
    fn save(&self, path: &str) -> PyResult<String> {
        Ok(self.inner.params.save(Path::new(path)).map_err(py_err)?.display().to_string())
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant().name()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.params.param_count()
    }

    /// Saliency map for one frame; SGFE also needs the previous map and a boundary map.
    #[pyo3(signature = (frame, prev=None, boundary=None))]
    fn predict(&self, frame: Frame, prev: Option<Map>, boundary: Option<Map>) -> PyResult<Map> {
        let f = to_frame(&frame)?;
        let out = match (prev, boundary) {
            (Some(p), Some(b)) => self.inner.predict_temporal(&f, &to_field(&p)?, &to_field(&b)?),
            (None, None) => self.inner.predict_frame(&f),
            _ => return Err(PyValueError::new_err("pass both prev and boundary, or neither")),
        };
        out.map(|m| from_field(&m)).map_err(py_err)
    }

    /// This model's trunk carried into a fresh `variant` with new deconvolution layers.
    #[pyo3(signature = (variant, seed=0))]
    fn transfer(&self, variant: &str, seed: u64) -> PyResult<Self> {
        let v: Variant = variant.parse().map_err(py_err)?;
        let spec = build_sgf(v, self.inner.spec.scale).map_err(py_err)?;
        let params = train::transfer_params(&self.inner.params, &spec, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(py_err)?;
        Ok(PyModel { inner: LoadedModel::new(params).map_err(py_err)? })
    }
}

/// Quadratic loss and its gradient with respect to the prediction.
#[pyfunction]
fn loss_quadratic(pred: Map, gt: Map) -> PyResult<(f64, Map)> {
    let (v, g) = train::loss_l1(&to_field(&pred)?, &to_field(&gt)?).map_err(py_err)?;
    Ok((v, from_field(&g)))
}

/// Quadratic plus `eta` times cross-entropy, and its gradient.
#[pyfunction]
#[pyo3(signature = (pred, gt, eta=1.0))]
fn loss_quadratic_ce(pred: Map, gt: Map, eta: f64) -> PyResult<(f64, Map)> {
    let (v, g) = train::loss_l2(&to_field(&pred)?, &to_field(&gt)?, eta).map_err(py_err)?;
    Ok((v, from_field(&g)))
}

/// Shuffled AUC with `(row, col)` positives and negatives.
#[pyfunction]
fn shuffled_auc(pred: Map, fixations: Vec<(usize, usize)>, negatives: Vec<(usize, usize)>) -> PyResult<f64> {
    metrics::shuffled_auc(&to_field(&pred)?, &points(&fixations), &negatives).map_err(py_err)
}

#[pyfunction]
fn nss(pred: Map, fixations: Vec<(usize, usize)>) -> PyResult<f64> {
    metrics::nss(&to_field(&pred)?, &points(&fixations)).map_err(py_err)
}

#[pyfunction]
fn cc(pred: Map, gt: Map) -> PyResult<f64> {
    metrics::cc(&to_field(&pred)?, &to_field(&gt)?).map_err(py_err)
}

#[pyfunction]
fn sim(pred: Map, gt: Map) -> PyResult<f64> {
    metrics::sim(&to_field(&pred)?, &to_field(&gt)?).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (pred, gt, grid=16))]
fn emd(pred: Map, gt: Map, grid: usize) -> PyResult<f64> {
    metrics::emd(&to_field(&pred)?, &to_field(&gt)?, grid).map_err(py_err)
}

/// Writes the synthetic benchmark under `out`; returns the number of clips.
#[pyfunction]
#[pyo3(signature = (out, seed=0, clips=None, frames_per_clip=None))]
fn synth(out: &str, seed: u64, clips: Option<usize>, frames_per_clip: Option<usize>) -> PyResult<usize> {
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec { seed, clips: clips.unwrap_or(d.clips), frames_per_clip: frames_per_clip.unwrap_or(d.frames_per_clip), ..d };
    generate_synthetic(&spec, Path::new(out)).map(|c| c.len()).map_err(py_err)
}

#[pymodule]
pub fn sgfcn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fixation_map, m)?)?;
    m.add_function(wrap_pyfunction!(quantize_map, m)?)?;
    m.add_function(wrap_pyfunction!(opb_boundary, m)?)?;
    m.add_function(wrap_pyfunction!(loss_quadratic, m)?)?;
    m.add_function(wrap_pyfunction!(loss_quadratic_ce, m)?)?;
    m.add_function(wrap_pyfunction!(shuffled_auc, m)?)?;
    m.add_function(wrap_pyfunction!(nss, m)?)?;
    m.add_function(wrap_pyfunction!(cc, m)?)?;
    m.add_function(wrap_pyfunction!(sim, m)?)?;
    m.add_function(wrap_pyfunction!(emd, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    Ok(())
}
