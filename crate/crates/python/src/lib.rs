//! Python bindings. Matrices cross the boundary as lists of row lists;
//! labels are ±1 integers.

use std::path::PathBuf;

use moonlite::distribution::{AdaptationWeights, ClassDistribution};
use moonlite::experiment::{self, ExperimentConfig};
use moonlite::loss::{self, LossBatch};
use moonlite::metrics::{self, DegeneratePolicy};
use moonlite::synthdata::{self, AttributeDataset, GeneratorConfig};
use moonlite::trainer::{self, TargetSpec, TrainConfig};
use moonlite::{Activation, Error, MlpModel};
use ndarray::Array2;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Numeric(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix<T: Copy>(rows: Vec<Vec<T>>, what: &str) -> PyResult<Array2<T>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err(format!(
            "{what} rows have unequal lengths"
        )));
    }
    Ok(
        Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect())
            .expect("lengths checked"),
    )
}

fn labels(rows: Vec<Vec<i64>>) -> PyResult<Array2<i8>> {
    let y = matrix(rows, "label")?;
    if let Some(v) = y.iter().find(|&&v| v != 1 && v != -1) {
        return Err(PyValueError::new_err(format!("label {v} is not -1 or +1")));
    }
    Ok(y.mapv(|v| v as i8))
}

fn rows<T: Clone>(a: &Array2<T>) -> Vec<Vec<T>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn weights(p_pos: Vec<f64>, p_neg: Vec<f64>) -> PyResult<AdaptationWeights> {
    AdaptationWeights::from_parts(p_pos, p_neg).map_err(py_err)
}

/// `"source"`, `"balanced"`, or a list of positive-class masses.
fn target_of(target: &Bound<'_, PyAny>, source: &ClassDistribution) -> PyResult<ClassDistribution> {
    if let Ok(name) = target.extract::<String>() {
        return match name.as_str() {
            "source" => Ok(source.clone()),
            "balanced" => ClassDistribution::uniform(source.len()).map_err(py_err),
            other => Err(PyValueError::new_err(format!("unknown target {other:?}"))),
        };
    }
    ClassDistribution::from_positive(target.extract::<Vec<f64>>()?).map_err(py_err)
}

/// Adaptation probabilities `(p_pos, p_neg)` for source and target
/// positive-class masses.
#[pyfunction]
fn adaptation_weights(source: Vec<f64>, target: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let s = ClassDistribution::from_positive(source).map_err(py_err)?;
    let t = ClassDistribution::from_positive(target).map_err(py_err)?;
    let w = AdaptationWeights::compute(&s, &t).map_err(py_err)?;
    Ok((
        (0..w.len()).map(|i| w.p_pos(i)).collect(),
        (0..w.len()).map(|i| w.p_neg(i)).collect(),
    ))
}

#[pyfunction]
fn moon_loss(
    predictions: Vec<Vec<f64>>,
    labels_: Vec<Vec<i64>>,
    p_pos: Vec<f64>,
    p_neg: Vec<f64>,
) -> PyResult<f64> {
    let (f, y, w) = (
        matrix(predictions, "prediction")?,
        labels(labels_)?,
        weights(p_pos, p_neg)?,
    );
    Ok(loss::moon_loss(
        &LossBatch::new(f.view(), y.view(), &w).map_err(py_err)?,
    ))
}

/// Expected gradient of the loss with respect to the predictions.
#[pyfunction]
fn moon_gradient(
    predictions: Vec<Vec<f64>>,
    labels_: Vec<Vec<i64>>,
    p_pos: Vec<f64>,
    p_neg: Vec<f64>,
) -> PyResult<Vec<Vec<f64>>> {
    let (f, y, w) = (
        matrix(predictions, "prediction")?,
        labels(labels_)?,
        weights(p_pos, p_neg)?,
    );
    let batch = LossBatch::new(f.view(), y.view(), &w).map_err(py_err)?;
    Ok(rows(&loss::moon_gradient_weighted(&batch)))
}

/// Per-attribute error and its mean.
#[pyfunction]
fn classification_error(
    scores: Vec<Vec<f64>>,
    labels_: Vec<Vec<i64>>,
) -> PyResult<(Vec<f64>, f64)> {
    let (s, y) = (matrix(scores, "score")?, labels(labels_)?);
    let e = metrics::classification_error(s.view(), y.view()).map_err(py_err)?;
    Ok((e.per_attribute, e.average))
}

/// Per-attribute balanced error (None where skipped) and its mean.
#[pyfunction]
#[pyo3(signature = (scores, labels_, target, skip_degenerate = false))]
fn balanced_error(
    scores: Vec<Vec<f64>>,
    labels_: Vec<Vec<i64>>,
    target: Vec<f64>,
    skip_degenerate: bool,
) -> PyResult<(Vec<Option<f64>>, f64)> {
    let (s, y) = (matrix(scores, "score")?, labels(labels_)?);
    let t = ClassDistribution::from_positive(target).map_err(py_err)?;
    let policy = if skip_degenerate {
        DegeneratePolicy::Skip
    } else {
        DegeneratePolicy::Fail
    };
    let e = metrics::balanced_error(s.view(), y.view(), &t, policy).map_err(py_err)?;
    Ok((e.per_attribute, e.average))
}

#[pyfunction]
fn normal_quantile(p: f64) -> f64 {
    synthdata::normal_quantile(p)
}

#[pyclass(name = "Dataset", module = "moonlite_py")]
struct PyDataset {
    inner: AttributeDataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(
        features: Vec<Vec<f64>>,
        labels_: Vec<Vec<i64>>,
        attribute_names: Vec<String>,
    ) -> PyResult<Self> {
        let inner = AttributeDataset::new(
            matrix(features, "feature")?,
            labels(labels_)?,
            attribute_names,
        )
        .map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Samples `n` rows. `config` is a JSON generator config; `seed`
    /// overrides its seed.
    #[staticmethod]
    #[pyo3(signature = (n, seed = None, config = None))]
    fn generate(n: usize, seed: Option<u64>, config: Option<&str>) -> PyResult<Self> {
        let mut c: GeneratorConfig = match config {
            Some(text) => {
                serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?
            }
            None => GeneratorConfig::default(),
        };
        if let Some(seed) = seed {
            c.seed = seed;
        }
        Ok(Self {
            inner: synthdata::generate(&c, n).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: synthdata::read_dataset(&path).map_err(py_err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        synthdata::write_dataset(&self.inner, &path).map_err(py_err)
    }

    fn split(&self, fractions: [f64; 3], seed: u64) -> PyResult<(Self, Self, Self)> {
        let (a, b, c) = synthdata::split(&self.inner, fractions, seed).map_err(py_err)?;
        Ok((Self { inner: a }, Self { inner: b }, Self { inner: c }))
    }

    fn features(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.features().to_owned())
    }

    fn labels(&self) -> Vec<Vec<i8>> {
        rows(&self.inner.labels().to_owned())
    }

    #[getter]
    fn attribute_names(&self) -> Vec<String> {
        self.inner.attribute_names().to_vec()
    }

    /// Fraction of positives per attribute.
    fn source_distribution(&self) -> PyResult<Vec<f64>> {
        Ok(ClassDistribution::estimate_source(self.inner.labels())
            .map_err(py_err)?
            .positives()
            .to_vec())
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "Model", module = "moonlite_py")]
struct PyModel {
    inner: MlpModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (layer_dims, activation = "tanh", seed = 0))]
    fn new(layer_dims: Vec<usize>, activation: &str, seed: u64) -> PyResult<Self> {
        let act: Activation = activation.parse().map_err(py_err)?;
        Ok(Self {
            inner: MlpModel::init(&layer_dims, act, seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: MlpModel::read_checkpoint(&path).map_err(py_err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_checkpoint(&path).map_err(py_err)
    }

    fn forward(&self, inputs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(inputs, "input")?;
        Ok(rows(&self.inner.forward(x.view()).map_err(py_err)?))
    }

    #[getter]
    fn layer_dims(&self) -> Vec<usize> {
        self.inner.layer_dims().to_vec()
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }
}

/// A trained joint network or one network per attribute.
#[pyclass(name = "Predictor", module = "moonlite_py")]
struct PyPredictor {
    inner: trainer::Predictor,
}

#[pymethods]
impl PyPredictor {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: experiment::read_predictor(&path).map_err(py_err)?,
        })
    }

    /// Writes `model.ckpt` or `models/attr_*.ckpt` into an existing directory.
    fn write(&self, dir: PathBuf) -> PyResult<()> {
        experiment::write_predictor(&self.inner, &dir).map_err(py_err)
    }

    fn predict(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(features, "feature")?;
        Ok(rows(&self.inner.predict(x.view()).map_err(py_err)?))
    }

    /// Metrics report as JSON. `target` is `"source"` (the dataset's own
    /// class masses), `"balanced"`, or a list of positive-class masses.
    #[pyo3(signature = (dataset, target, skip_degenerate = false))]
    fn evaluate(
        &self,
        dataset: &PyDataset,
        target: &Bound<'_, PyAny>,
        skip_degenerate: bool,
    ) -> PyResult<String> {
        let own = ClassDistribution::estimate_source(dataset.inner.labels()).map_err(py_err)?;
        let t = target_of(target, &own)?;
        let policy = if skip_degenerate {
            DegeneratePolicy::Skip
        } else {
            DegeneratePolicy::Fail
        };
        let report = trainer::evaluate(&self.inner, &dataset.inner, &t, policy).map_err(py_err)?;
        Ok(report.to_json())
    }

    #[getter]
    fn is_joint(&self) -> bool {
        matches!(self.inner, trainer::Predictor::Joint(_))
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }
}

/// Trains on `train`, selecting on `val`. Returns the predictor and one
/// history CSV per trained network.
#[pyfunction]
#[pyo3(signature = (train, val, config = None, target = None, separate = false))]
fn train(
    py: Python<'_>,
    train: &PyDataset,
    val: &PyDataset,
    config: Option<&str>,
    target: Option<&str>,
    separate: bool,
) -> PyResult<(PyPredictor, Vec<String>)> {
    let mut c: TrainConfig = match config {
        Some(text) => {
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?
        }
        None => TrainConfig::default(),
    };
    match target {
        Some("source") => c.target = TargetSpec::source(),
        Some("balanced") => c.target = TargetSpec::balanced(),
        Some(other) => return Err(PyValueError::new_err(format!("unknown target {other:?}"))),
        None => {}
    }
    let (tr, va) = (&train.inner, &val.inner);
    let (predictor, histories) = py
        .detach(|| {
            if separate {
                trainer::train_separate(&c, tr, va)
                    .map(|(m, h)| (trainer::Predictor::Separate(m), h))
            } else {
                trainer::train_moon(&c, tr, va)
                    .map(|(m, h)| (trainer::Predictor::Joint(m), vec![h]))
            }
        })
        .map_err(py_err)?;
    Ok((
        PyPredictor { inner: predictor },
        histories.iter().map(|h| h.to_csv()).collect(),
    ))
}

/// Runs an experiment config (JSON) and returns the summary CSV; writes
/// full results when `out` is given.
#[pyfunction]
#[pyo3(signature = (config, threads = 1, out = None))]
fn compare(py: Python<'_>, config: &str, threads: usize, out: Option<PathBuf>) -> PyResult<String> {
    let c: ExperimentConfig =
        serde_json::from_str(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let outcome = py
        .detach(|| experiment::compare(&c, threads))
        .map_err(py_err)?;
    if let Some(dir) = out {
        experiment::write_outcome(&c, &outcome, &dir).map_err(py_err)?;
    }
    Ok(outcome.summary_csv())
}

#[pymodule]
fn moonlite_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(adaptation_weights, m)?)?;
    m.add_function(wrap_pyfunction!(moon_loss, m)?)?;
    m.add_function(wrap_pyfunction!(moon_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(classification_error, m)?)?;
    m.add_function(wrap_pyfunction!(balanced_error, m)?)?;
    m.add_function(wrap_pyfunction!(normal_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyPredictor>()?;
    Ok(())
}
