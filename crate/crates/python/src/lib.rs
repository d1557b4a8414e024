//! Python bindings. Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mmml::harness::dataset::{IngestOptions, PixelScale};
use mmml::harness::protocol::parse_gallery_count;
use mmml::harness::{ProbeCount, SplitConfig, SynthConfig, SynthPreset};
use mmml::{Hyperparams, ModelSelection};

create_exception!(pymmml, MmmlError, PyException);

fn to_py<T>(r: mmml::Result<T>) -> PyResult<T> {
    r.map_err(|e| MmmlError::new_err(e.to_string()))
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(MmmlError::new_err("ragged matrix: rows differ in length"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[pyclass(name = "ImageSet", frozen)]
struct PyImageSet {
    inner: mmml::ImageSet,
}

#[pymethods]
impl PyImageSet {
    /// `images` holds one vectorized image per row.
    #[new]
    fn new(images: Vec<Vec<f64>>, label: String, set_id: String) -> PyResult<Self> {
        Ok(PyImageSet {
            inner: to_py(mmml::ImageSet::from_rows(&images, label, set_id))?,
        })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label().to_string()
    }

    #[getter]
    fn set_id(&self) -> String {
        self.inner.set_id().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// One image per row.
    fn images(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.samples().transpose())
    }

    fn __repr__(&self) -> String {
        format!(
            "ImageSet(label={:?}, set_id={:?}, dim={}, images={})",
            self.inner.label(),
            self.inner.set_id(),
            self.inner.dim(),
            self.inner.len()
        )
    }
}

#[pyclass(name = "SpdPoint", frozen)]
struct PySpdPoint {
    inner: mmml::SpdPoint,
}

#[pymethods]
impl PySpdPoint {
    #[new]
    fn new(matrix: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PySpdPoint {
            inner: to_py(mmml::SpdPoint::new(matrix_from_rows(&matrix)?))?,
        })
    }

    fn c_star(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.c_star())
    }

    fn log_c(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.log_c())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }
}

#[pyclass(name = "GrassmannPoint", frozen)]
struct PyGrassmannPoint {
    inner: mmml::GrassmannPoint,
}

#[pymethods]
impl PyGrassmannPoint {
    /// `basis` is `d × q` with orthonormal columns.
    #[new]
    fn new(basis: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyGrassmannPoint {
            inner: to_py(mmml::GrassmannPoint::new(matrix_from_rows(&basis)?))?,
        })
    }

    fn basis(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.basis())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }
}

#[allow(clippy::too_many_arguments)]
fn hyperparams(
    q: usize,
    alpha: f64,
    u1: f64,
    u2: f64,
    d_z: usize,
    eps: f64,
    models: &str,
    normalize_kernels: bool,
) -> PyResult<Hyperparams> {
    Ok(Hyperparams {
        q,
        alpha,
        u1,
        u2,
        d_z,
        eps,
        models: to_py(models.parse::<ModelSelection>())?,
        normalize_kernels,
    })
}

fn unwrap_sets(sets: &[PyRef<'_, PyImageSet>]) -> Vec<mmml::ImageSet> {
    sets.iter().map(|s| s.inner.clone()).collect()
}

#[pyclass(name = "EmbeddingModel", frozen)]
struct PyEmbeddingModel {
    inner: mmml::EmbeddingModel,
}

#[pymethods]
impl PyEmbeddingModel {
    #[staticmethod]
    #[pyo3(signature = (sets, q=10, alpha=1000.0, u1=0.8, u2=0.2, d_z=10, eps=1e-4, models="both", normalize_kernels=false))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        py: Python<'_>,
        sets: Vec<PyRef<'_, PyImageSet>>,
        q: usize,
        alpha: f64,
        u1: f64,
        u2: f64,
        d_z: usize,
        eps: f64,
        models: &str,
        normalize_kernels: bool,
    ) -> PyResult<Self> {
        let hyper = hyperparams(q, alpha, u1, u2, d_z, eps, models, normalize_kernels)?;
        let data = unwrap_sets(&sets);
        let inner = to_py(py.detach(|| mmml::EmbeddingModel::fit_sets(&data, &hyper)))?;
        Ok(PyEmbeddingModel { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyEmbeddingModel {
            inner: to_py(mmml::harness::load_model(&path))?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        to_py(mmml::harness::save_model(&self.inner, &path))
    }

    /// Returns `(label, distance, nearest_set_id)`.
    fn classify(&self, set: &PyImageSet) -> PyResult<(String, f64, String)> {
        let c = to_py(self.inner.classify_set(&set.inner))?;
        let nearest = &c.neighbors[0];
        Ok((c.label, nearest.distance, nearest.set_id.clone()))
    }

    fn classify_points(&self, spd: &PySpdPoint, grassmann: &PyGrassmannPoint) -> PyResult<(String, f64, String)> {
        let c = to_py(self.inner.classify(&spd.inner, &grassmann.inner))?;
        let nearest = &c.neighbors[0];
        Ok((c.label, nearest.distance, nearest.set_id.clone()))
    }

    fn embed(&self, set: &PyImageSet) -> PyResult<Vec<f64>> {
        let (spd, grass) = to_py(mmml::model_set(&set.inner, self.inner.q(), self.inner.alpha()))?;
        Ok(to_py(self.inner.embed_probe(&spd, &grass))?.iter().copied().collect())
    }

    fn gallery_embeddings(&self) -> Vec<Vec<f64>> {
        self.inner
            .gallery_embeddings()
            .iter()
            .map(|e| e.iter().copied().collect())
            .collect()
    }

    #[getter]
    fn gallery_labels(&self) -> Vec<String> {
        self.inner.gallery_labels().to_vec()
    }

    #[getter]
    fn d_z(&self) -> usize {
        self.inner.d_z()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }
}

/// Returns `(SpdPoint, GrassmannPoint)` for one set.
#[pyfunction]
#[pyo3(signature = (set, q=10, alpha=1000.0))]
fn model_set(set: &PyImageSet, q: usize, alpha: f64) -> PyResult<(PySpdPoint, PyGrassmannPoint)> {
    let (spd, grassmann) = to_py(mmml::model_set(&set.inner, q, alpha))?;
    Ok((PySpdPoint { inner: spd }, PyGrassmannPoint { inner: grassmann }))
}

#[pyfunction]
fn led_distance(a: &PySpdPoint, b: &PySpdPoint) -> PyResult<f64> {
    to_py(mmml::led_distance(&a.inner, &b.inner))
}

#[pyfunction]
fn log_euclidean_kernel(a: &PySpdPoint, b: &PySpdPoint) -> PyResult<f64> {
    to_py(mmml::log_euclidean_kernel(&a.inner, &b.inner))
}

#[pyfunction]
fn projection_distance(a: &PyGrassmannPoint, b: &PyGrassmannPoint) -> PyResult<f64> {
    to_py(mmml::projection_distance(&a.inner, &b.inner))
}

#[pyfunction]
fn projection_kernel(a: &PyGrassmannPoint, b: &PyGrassmannPoint) -> PyResult<f64> {
    to_py(mmml::projection_kernel(&a.inner, &b.inner))
}

#[pyfunction]
#[pyo3(signature = (classes=5, sets_per_class=10, images_per_set=30, d=10, separation=10.0, seed=0, preset="separated", signal_dim=3))]
#[allow(clippy::too_many_arguments)]
fn synth_generate(
    classes: usize,
    sets_per_class: usize,
    images_per_set: usize,
    d: usize,
    separation: f64,
    seed: u64,
    preset: &str,
    signal_dim: usize,
) -> PyResult<Vec<PyImageSet>> {
    let config = SynthConfig {
        classes,
        sets_per_class,
        images_per_set,
        d,
        separation,
        seed,
        preset: to_py(preset.parse::<SynthPreset>())?,
        signal_dim,
    };
    Ok(to_py(mmml::harness::synth_generate(&config))?
        .into_iter()
        .map(|inner| PyImageSet { inner })
        .collect())
}

#[pyfunction]
#[pyo3(signature = (manifest, unit_scale=false, image_side=20))]
fn ingest_manifest(manifest: PathBuf, unit_scale: bool, image_side: u32) -> PyResult<Vec<PyImageSet>> {
    let options = IngestOptions {
        pixel_scale: if unit_scale { PixelScale::Unit } else { PixelScale::Raw },
        image_side,
    };
    Ok(to_py(mmml::harness::ingest_manifest(&manifest, &options))?
        .into_iter()
        .map(|inner| PyImageSet { inner })
        .collect())
}

/// Runs the gallery/probe protocol. Returns a dict with `mean`, `std`,
/// `per_fold` and the rendered `report` text.
#[pyfunction]
#[pyo3(signature = (sets, gallery="5", probe="rest", folds=10, seed=0, q=10, alpha=1000.0, u1=0.8, u2=0.2, d_z=10, eps=1e-4, models="both", normalize_kernels=false))]
#[allow(clippy::too_many_arguments)]
fn run_experiment<'py>(
    py: Python<'py>,
    sets: Vec<PyRef<'py, PyImageSet>>,
    gallery: &str,
    probe: &str,
    folds: usize,
    seed: u64,
    q: usize,
    alpha: f64,
    u1: f64,
    u2: f64,
    d_z: usize,
    eps: f64,
    models: &str,
    normalize_kernels: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let split = SplitConfig {
        gallery_per_class: to_py(parse_gallery_count(gallery))?,
        probe_per_class: to_py(probe.parse::<ProbeCount>())?,
        folds,
        seed,
    };
    let hyper = hyperparams(q, alpha, u1, u2, d_z, eps, models, normalize_kernels)?;
    let data = unwrap_sets(&sets);
    let report = to_py(py.detach(|| mmml::harness::run_experiment(&data, &split, &hyper)))?;
    let out = PyDict::new(py);
    out.set_item("mean", report.mean)?;
    out.set_item("std", report.std)?;
    out.set_item("per_fold", report.per_fold_accuracy.clone())?;
    out.set_item("report", report.render())?;
    Ok(out)
}

#[pymodule]
fn pymmml(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MmmlError", m.py().get_type::<MmmlError>())?;
    m.add_class::<PyImageSet>()?;
    m.add_class::<PySpdPoint>()?;
    m.add_class::<PyGrassmannPoint>()?;
    m.add_class::<PyEmbeddingModel>()?;
    m.add_function(wrap_pyfunction!(model_set, m)?)?;
    m.add_function(wrap_pyfunction!(led_distance, m)?)?;
    m.add_function(wrap_pyfunction!(log_euclidean_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(projection_distance, m)?)?;
    m.add_function(wrap_pyfunction!(projection_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(synth_generate, m)?)?;
    m.add_function(wrap_pyfunction!(ingest_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
