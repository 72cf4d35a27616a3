//! Python bindings for the two-stage glyph recognizer.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use twostage_glyph::corners::glyph_corners;
use twostage_glyph::ensemble::Decision;
use twostage_glyph::features;
use twostage_glyph::mlp::{self, MlpModel, TrainConfig};
use twostage_glyph::pipeline::{self, synth, ModelBundle, PipelineConfig, Stage};
use twostage_glyph::preprocess::{self, GrayImage};
use twostage_glyph::{editdist, ensemble, pgm, Error};

fn err(e: Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn json_to_py<'py>(py: Python<'py>, s: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (s,))
}

/// 8-bit grey image, row-major, 0 = black.
#[pyclass(name = "GrayImage", module = "twostage_glyph_py", frozen)]
struct PyGrayImage {
    inner: GrayImage,
}

#[pymethods]
impl PyGrayImage {
    #[new]
    fn new(width: usize, height: usize, pixels: Vec<u8>) -> PyResult<Self> {
        Ok(Self {
            inner: GrayImage::new(width, height, pixels).map_err(err)?,
        })
    }

    /// Reads a P2 or P5 PGM file.
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: pgm::read(path).map_err(err)?,
        })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        pgm::write_binary(&self.inner, path).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn pixels<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.pixels())
    }

    fn __repr__(&self) -> String {
        format!("GrayImage({}x{})", self.inner.width(), self.inner.height())
    }
}

#[pyfunction]
#[pyo3(signature = (image, side = preprocess::DEFAULT_SIDE))]
fn shadow_features(image: &PyGrayImage, side: usize) -> PyResult<Vec<f64>> {
    let g = preprocess::normalize(&image.inner, side).map_err(err)?;
    Ok(features::shadow_features(&g).values)
}

#[pyfunction]
#[pyo3(signature = (image, side = preprocess::DEFAULT_SIDE))]
fn chain_features(image: &PyGrayImage, side: usize) -> PyResult<Vec<f64>> {
    let g = preprocess::normalize(&image.inner, side).map_err(err)?;
    Ok(features::chain_features(&g).values)
}

type CornerPair = (Vec<(usize, usize)>, Vec<u32>);

/// Returns `(corners, corner_string)` of the normalized glyph.
#[pyfunction]
#[pyo3(signature = (image, side = preprocess::DEFAULT_SIDE))]
fn corners(image: &PyGrayImage, side: usize) -> PyResult<CornerPair> {
    let g = preprocess::normalize(&image.inner, side).map_err(err)?;
    let gc = glyph_corners(&g, &Default::default()).map_err(err)?;
    Ok((gc.corners, gc.string.counts().to_vec()))
}

#[pyfunction]
fn edit_distance(a: Vec<i64>, b: Vec<i64>) -> usize {
    editdist::edit_distance(&a, &b)
}

#[pyfunction]
fn fusion_weights(accuracies: Vec<f64>) -> PyResult<Vec<f64>> {
    ensemble::fusion_weights(&accuracies).map_err(err)
}

/// Three-layer sigmoid network trained by backpropagation with momentum.
#[pyclass(name = "Mlp", module = "twostage_glyph_py")]
struct PyMlp {
    inner: MlpModel,
}

#[pymethods]
impl PyMlp {
    #[new]
    #[pyo3(signature = (n_in, n_hidden, n_out, seed = 0))]
    fn new(n_in: usize, n_hidden: usize, n_out: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: MlpModel::init(n_in, n_hidden, n_out, seed).map_err(err)?,
        })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.n_in, self.inner.n_hidden, self.inner.n_out)
    }

    fn forward(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.forward(&x).map_err(err)
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<usize> {
        self.inner.predict(&x).map_err(err)
    }

    /// Trains on `(features, label)` pairs; returns the per-epoch summed
    /// squared error.
    #[pyo3(signature = (data, epochs = 100, learning_rate = 0.8, momentum = 0.7, seed = 0))]
    fn train(
        &mut self,
        py: Python<'_>,
        data: Vec<(Vec<f64>, usize)>,
        epochs: usize,
        learning_rate: f64,
        momentum: f64,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let cfg = TrainConfig {
            learning_rate,
            momentum,
            epochs,
            seed,
            shuffle: true,
        };
        let model = &mut self.inner;
        py.detach(|| model.train(&data, &cfg)).map_err(err)
    }

    #[pyo3(signature = (x, label, h = 1e-5))]
    fn gradient_check(&self, x: Vec<f64>, label: usize, h: f64) -> PyResult<f64> {
        mlp::gradient_check(&self.inner, &x, label, h).map_err(err)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: MlpModel::from_bytes(data).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: MlpModel::load(path).map_err(err)?,
        })
    }
}

/// Trained two-stage recognizer.
#[pyclass(name = "Bundle", module = "twostage_glyph_py", frozen)]
struct PyBundle {
    inner: ModelBundle,
}

#[pymethods]
impl PyBundle {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ModelBundle::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels.clone()
    }

    #[getter]
    fn fusion_weights(&self) -> Vec<f64> {
        self.inner.voting.weights.clone()
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.voting.theta
    }

    /// Returns a dict with the label and the decision trace.
    fn predict<'py>(&self, py: Python<'py>, image: &PyGrayImage) -> PyResult<Bound<'py, PyDict>> {
        let p = py
            .detach(|| self.inner.predict(&image.inner))
            .map_err(err)?;
        let t = &p.trace;
        let d = PyDict::new(py);
        d.set_item("label", &p.label)?;
        d.set_item("index", p.index)?;
        let decision = match t.decision {
            Decision::Certain(_) => "certain",
            Decision::Confused(_) => "confused",
            Decision::Rejected(_) => "rejected",
        };
        d.set_item("decision", decision)?;
        let stage = match t.stage {
            Stage::Mlp => "mlp",
            Stage::EditDistance => "edit_distance",
        };
        d.set_item("stage", stage)?;
        d.set_item("relative_difference", t.relative_difference)?;
        d.set_item("shadow_scores", &t.shadow_scores)?;
        d.set_item("chain_scores", &t.chain_scores)?;
        d.set_item("combined", &t.combined)?;
        d.set_item("corner_string", t.corner_string.counts().to_vec())?;
        d.set_item("distances", t.distances.clone())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Bundle({} classes, theta={:.2})",
            self.inner.labels.len(),
            self.inner.voting.theta
        )
    }
}

fn config(seed: u64, epochs: usize, side: usize, folds: usize) -> PipelineConfig {
    PipelineConfig {
        seed,
        epochs,
        side,
        folds,
        ..PipelineConfig::default()
    }
}

/// Trains a bundle on a directory-per-class PGM tree.
#[pyfunction]
#[pyo3(signature = (data_dir, seed = 42, epochs = 60, side = 100))]
fn train(
    py: Python<'_>,
    data_dir: &str,
    seed: u64,
    epochs: usize,
    side: usize,
) -> PyResult<PyBundle> {
    let cfg = config(seed, epochs, side, 3);
    let bundle = py.detach(|| {
        let ds = pipeline::load_dataset(data_dir)?;
        pipeline::train_bundle(&ds, &cfg).map(|(b, _)| b)
    });
    Ok(PyBundle {
        inner: bundle.map_err(err)?,
    })
}

/// Cross-validated evaluation; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (data_dir, seed = 42, folds = 3, epochs = 60))]
fn evaluate<'py>(
    py: Python<'py>,
    data_dir: &str,
    seed: u64,
    folds: usize,
    epochs: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config(seed, epochs, preprocess::DEFAULT_SIDE, folds);
    let report = py
        .detach(|| {
            let ds = pipeline::load_dataset(data_dir)?;
            pipeline::evaluate(&ds, &cfg)
        })
        .map_err(err)?;
    json_to_py(py, &report.to_json())
}

/// Writes a synthetic corpus; returns the number of images.
#[pyfunction]
#[pyo3(signature = (out_dir, classes, per_class, noise = 0.05, seed = 42))]
fn synthesize(
    py: Python<'_>,
    out_dir: &str,
    classes: usize,
    per_class: usize,
    noise: f64,
    seed: u64,
) -> PyResult<usize> {
    py.detach(|| synth::generate_synthetic_corpus(out_dir, classes, per_class, noise, seed))
        .map(|ds| ds.len())
        .map_err(err)
}

#[pymodule]
fn twostage_glyph_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrayImage>()?;
    m.add_class::<PyMlp>()?;
    m.add_class::<PyBundle>()?;
    m.add_function(wrap_pyfunction!(shadow_features, m)?)?;
    m.add_function(wrap_pyfunction!(chain_features, m)?)?;
    m.add_function(wrap_pyfunction!(corners, m)?)?;
    m.add_function(wrap_pyfunction!(edit_distance, m)?)?;
    m.add_function(wrap_pyfunction!(fusion_weights, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    Ok(())
}
