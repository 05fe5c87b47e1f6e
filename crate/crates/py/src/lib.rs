//! Python bindings. Grids cross the boundary as nested lists indexed `[y][x]`;
//! images are `[y][x] -> [r, g, b]` in `[0, 1]`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rexnet::net::{edge_loss as core_edge_loss, RexNet};
use rexnet::pipeline::{self, DatasetManifest, RunConfig};
use rexnet::plane::{ImagePlane, Plane};
use rexnet::segment::{self, RegionMask};

fn py_err(e: rexnet::Error) -> PyErr {
    match e {
        rexnet::Error::Io(_) | rexnet::Error::File { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn grid<T: Clone>(rows: Vec<Vec<T>>, what: &str) -> PyResult<Plane<T>> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err(format!("{what}: rows have different lengths")));
    }
    Plane::from_vec(w, h, rows.concat()).map_err(py_err)
}

fn rows<T: Clone>(p: &Plane<T>) -> Vec<Vec<T>> {
    p.data().chunks(p.width().max(1)).map(<[T]>::to_vec).collect()
}

fn region_mask(labels: Vec<Vec<u32>>) -> PyResult<RegionMask> {
    RegionMask::new(grid(labels, "labels")?).map_err(py_err)
}

/// Run configuration; every key of the config file is settable.
#[pyclass(name = "RunConfig")]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (path=None))]
    fn new(path: Option<PathBuf>) -> PyResult<Self> {
        let inner = match path {
            Some(p) => RunConfig::load(&p).map_err(py_err)?,
            None => RunConfig::default(),
        };
        Ok(PyRunConfig { inner })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(py_err)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!("RunConfig(seed={}, image_size={})", self.inner.seed, self.inner.image_size)
    }
}

/// A trained network loaded from a checkpoint directory.
#[pyclass(name = "RexNet")]
struct PyRexNet {
    inner: RexNet,
}

#[pymethods]
impl PyRexNet {
    #[staticmethod]
    fn load(config: &PyRunConfig, checkpoint: PathBuf) -> PyResult<Self> {
        let inner = pipeline::load_network(&config.inner, &checkpoint).map_err(py_err)?;
        Ok(PyRexNet { inner })
    }

    /// Randomly initialised network.
    #[staticmethod]
    fn init(config: &PyRunConfig, seed: u64) -> PyResult<Self> {
        let inner = RexNet::new(config.inner.net_config(), seed).map_err(py_err)?;
        Ok(PyRexNet { inner })
    }

    /// Returns a dict with `s_s`, `s_e`, `s_c`, `s` and `branches`.
    fn predict<'py>(
        &self,
        py: Python<'py>,
        image: Vec<Vec<[f64; 3]>>,
        superpixels: Vec<Vec<u32>>,
        edges: Vec<Vec<u32>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let image: ImagePlane = grid(image, "image")?;
        let (sp, ed) = (region_mask(superpixels)?, region_mask(edges)?);
        let p = py.detach(|| self.inner.predict(&image, &sp, &ed)).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("s_s", rows(&p.s_s))?;
        d.set_item("s_e", rows(&p.s_e))?;
        d.set_item("s_c", rows(&p.s_c))?;
        d.set_item("s", rows(&p.s))?;
        d.set_item("branches", p.branch_maps.iter().map(rows).collect::<Vec<_>>())?;
        Ok(d)
    }
}

#[pyfunction]
#[pyo3(signature = (image, regions=200, compactness=10.0, iterations=10))]
fn superpixels(image: Vec<Vec<[f64; 3]>>, regions: usize, compactness: f64, iterations: usize) -> PyResult<Vec<Vec<u32>>> {
    let image = grid(image, "image")?;
    let params = segment::SlicParams { regions, compactness, iterations };
    let mask = segment::slic_superpixels(&image, params).map_err(py_err)?;
    Ok(rows(mask.labels()))
}

/// Edge-region labels from an edge-probability map.
#[pyfunction]
#[pyo3(signature = (edge_prob, threshold=0.5))]
fn edge_regions(edge_prob: Vec<Vec<f64>>, threshold: f64) -> PyResult<Vec<Vec<u32>>> {
    let prob = grid(edge_prob, "edge_prob")?;
    Ok(rows(segment::edge_regions(&segment::thin_edges(&prob, threshold)).labels()))
}

#[pyfunction]
fn edge_loss(map: Vec<Vec<f64>>, labels: Vec<Vec<u32>>) -> PyResult<f64> {
    let map = grid(map, "map")?;
    let mask = region_mask(labels)?;
    if map.dims() != mask.labels().dims() {
        return Err(PyValueError::new_err("map and labels differ in size"));
    }
    Ok(core_edge_loss(&map, &mask))
}

/// `{f_beta, mae, auc, precision, recall}` or `None` for an empty ground truth.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, map: Vec<Vec<f64>>, gt: Vec<Vec<bool>>) -> PyResult<Option<Bound<'py, PyDict>>> {
    let Some(r) = rexnet::metrics::evaluate(&grid(map, "map")?, &grid(gt, "gt")?).map_err(py_err)? else {
        return Ok(None);
    };
    let d = PyDict::new(py);
    d.set_item("f_beta", r.f_beta)?;
    d.set_item("mae", r.mae)?;
    d.set_item("auc", r.auc)?;
    d.set_item("precision", r.pr_points.iter().map(|p| p.precision).collect::<Vec<_>>())?;
    d.set_item("recall", r.pr_points.iter().map(|p| p.recall).collect::<Vec<_>>())?;
    Ok(Some(d))
}

#[pyfunction]
fn position_factor(depth: f64, sigma: f64) -> f64 {
    rexnet::depth::position_factor(depth, sigma)
}

/// Returns `(s1, s2)`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn refine_depth(
    config: &PyRunConfig,
    saliency: Vec<Vec<f64>>,
    depth: Vec<Vec<f64>>,
    superpixels: Vec<Vec<u32>>,
    image: Vec<Vec<[f64; 3]>>,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let s0 = grid(saliency, "saliency")?;
    let depth = grid(depth, "depth")?;
    let mask = region_mask(superpixels)?;
    let image = grid(image, "image")?;
    let (s1, s2) = rexnet::depth::refine(&s0, &depth, &mask, &image, config.inner.depth_params()).map_err(py_err)?;
    Ok((rows(&s1), rows(&s2)))
}

fn manifest(data: &std::path::Path) -> PyResult<DatasetManifest> {
    DatasetManifest::load(data).map_err(py_err)
}

#[pyfunction]
fn gen(py: Python<'_>, config: &PyRunConfig, data: PathBuf) -> PyResult<usize> {
    py.detach(|| pipeline::cmd_gen(&config.inner, &data)).map_err(py_err)
}

#[pyfunction]
fn segment_dataset(py: Python<'_>, config: &PyRunConfig, data: PathBuf) -> PyResult<usize> {
    let m = manifest(&data)?;
    py.detach(|| pipeline::cmd_segment(&config.inner, &m)).map_err(py_err)
}

/// Returns the per-iteration `(stage, loss)` log; empty when there is nothing to train.
#[pyfunction]
fn train(py: Python<'_>, config: &PyRunConfig, data: PathBuf, out: PathBuf) -> PyResult<Vec<(u8, f64)>> {
    let m = manifest(&data)?;
    let log = py.detach(|| pipeline::cmd_train(&config.inner, &m, &out)).map_err(py_err)?;
    Ok(log.map_or_else(Vec::new, |l| l.rows.iter().map(|r| (r.stage, r.total)).collect()))
}

#[pyfunction]
fn predict(py: Python<'_>, config: &PyRunConfig, data: PathBuf, checkpoint: PathBuf, out: PathBuf) -> PyResult<usize> {
    let m = manifest(&data)?;
    py.detach(|| pipeline::cmd_predict(&config.inner, &m, &checkpoint, &out)).map_err(py_err)
}

/// Dataset metrics keyed by map kind (`ss`, `se`, `sc`, `s`, `s1`, `s2`).
#[pyfunction]
fn eval_dataset<'py>(py: Python<'py>, data: PathBuf, pred: PathBuf, out: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let m = manifest(&data)?;
    let summaries = py.detach(|| pipeline::cmd_eval(&m, &pred, &out)).map_err(py_err)?;
    let d = PyDict::new(py);
    for s in summaries {
        let row = PyDict::new(py);
        row.set_item("images", s.images)?;
        row.set_item("f_beta", s.report.f_beta)?;
        row.set_item("mae", s.report.mae)?;
        row.set_item("auc", s.report.auc)?;
        d.set_item(s.kind, row)?;
    }
    Ok(d)
}

/// Returns `(passed, worst relative error)`.
#[pyfunction]
fn gradcheck(py: Python<'_>, config: &PyRunConfig) -> PyResult<(bool, f64)> {
    let r = py.detach(|| pipeline::gradient_suite(&config.inner, config.inner.seed)).map_err(py_err)?;
    Ok((r.passed(), r.worst()))
}

#[pymodule]
fn pyrexnet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyRexNet>()?;
    m.add_function(wrap_pyfunction!(superpixels, m)?)?;
    m.add_function(wrap_pyfunction!(edge_regions, m)?)?;
    m.add_function(wrap_pyfunction!(edge_loss, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(position_factor, m)?)?;
    m.add_function(wrap_pyfunction!(refine_depth, m)?)?;
    m.add_function(wrap_pyfunction!(gen, m)?)?;
    m.add_function(wrap_pyfunction!(segment_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(eval_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
