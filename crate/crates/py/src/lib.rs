//! Python bindings. Python callers pass samples as rows (`m×n` nested
//! lists); the bias row and the column-per-sample layout used by the Rust
//! crate are handled here.

use std::cell::RefCell;

use feedback_learn as fl;
use feedback_learn::data::{prepare, LabelEncoding, RawDataset};
use feedback_learn::{Activation, DeepConfig, Matrix, RateAdaptation, SignPolicy, TrainConfig};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: fl::Error) -> PyErr {
    match e {
        fl::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        fl::Error::NonFinite(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_activation(s: &str) -> PyResult<Activation> {
    s.parse().map_err(to_py)
}

fn parse_policy(s: &str) -> PyResult<SignPolicy> {
    s.parse().map_err(to_py)
}

/// Samples-as-rows to a column-per-sample matrix.
fn columns(rows: &[Vec<f64>]) -> PyResult<Matrix> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let data = (0..n)
        .flat_map(|f| rows.iter().map(move |r| r[f]))
        .collect();
    Matrix::new(n, m, data).map_err(to_py)
}

fn as_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row_slice(r).to_vec()).collect()
}

fn samples_as_rows(m: &Matrix) -> Vec<Vec<f64>> {
    as_rows(&m.transpose())
}

fn x_block(rows: &[Vec<f64>]) -> PyResult<Matrix> {
    Ok(columns(rows)?.with_ones_row())
}

/// Sign with zero (and negative zero) mapped to +1.
#[pyfunction]
fn sgn(x: f64) -> f64 {
    fl::sgn(x)
}

/// Runs the feedback loop on `backward` (a callable or one of "identity",
/// "tanh", "cubic") and returns a dict with the output and diagnostics.
#[pyfunction]
#[pyo3(signature = (backward, x_input, gain=100.0, rate=0.005, max_iters=100_000, tolerance=1e-12, backward_sign=1.0))]
#[allow(clippy::too_many_arguments)]
fn invert<'py>(
    py: Python<'py>,
    backward: &Bound<'py, PyAny>,
    x_input: f64,
    gain: f64,
    rate: f64,
    max_iters: usize,
    tolerance: f64,
    backward_sign: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = fl::FeedbackConfig {
        forward_gain: gain,
        rate,
        max_iters,
        tolerance,
    };
    let failure: RefCell<Option<PyErr>> = RefCell::new(None);
    let result = if let Ok(name) = backward.extract::<String>() {
        let f: fn(f64) -> f64 = match name.as_str() {
            "identity" => |x| x,
            "tanh" => f64::tanh,
            "cubic" => |x: f64| x * x * x + x,
            other => return Err(PyValueError::new_err(format!("unknown function {other:?}"))),
        };
        fl::run_feedback_loop(f, backward_sign, x_input, &cfg)
    } else {
        let call = |x: f64| match backward.call1((x,)).and_then(|v| v.extract::<f64>()) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        };
        fl::run_feedback_loop(call, backward_sign, x_input, &cfg)
    };
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let (x_output, trace) = result.map_err(to_py)?;
    let last = trace.last();
    let out = PyDict::new(py);
    out.set_item("x_output", x_output)?;
    out.set_item("residual", last.residual)?;
    out.set_item("iterations", last.iteration)?;
    out.set_item("converged", trace.converged)?;
    Ok(out)
}

#[pyclass(name = "SingleLayerModel")]
struct PySingleLayer {
    inner: fl::SingleLayerModel,
}

#[pymethods]
impl PySingleLayer {
    /// Zero weights, or uniform random ones when `seed` is given.
    #[new]
    #[pyo3(signature = (n_features, n_outputs, activation="identity", seed=None))]
    fn new(
        n_features: usize,
        n_outputs: usize,
        activation: &str,
        seed: Option<u64>,
    ) -> PyResult<Self> {
        let act = parse_activation(activation)?;
        let inner = match seed {
            Some(s) => fl::SingleLayerModel::random(n_features, n_outputs, act, s),
            None => fl::SingleLayerModel::zeros(n_features, n_outputs, act),
        };
        Ok(Self { inner })
    }

    /// `(n_features+1)×n_outputs`, bias in the last row.
    #[getter]
    fn weights(&self) -> Vec<Vec<f64>> {
        as_rows(&self.inner.weights)
    }

    #[setter]
    fn set_weights(&mut self, rows: Vec<Vec<f64>>) -> PyResult<()> {
        let m = Matrix::from_rows(&rows).map_err(to_py)?;
        if m.shape() != self.inner.weights.shape() {
            return Err(PyValueError::new_err(format!(
                "expected shape {:?}, got {:?}",
                self.inner.weights.shape(),
                m.shape()
            )));
        }
        self.inner.weights = m;
        Ok(())
    }

    #[getter]
    fn activation(&self) -> String {
        self.inner.activation.to_string()
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let y = fl::forward_predict(&self.inner, &x_block(&x)?).map_err(to_py)?;
        Ok(samples_as_rows(&y))
    }

    /// Feedback training; returns the per-iteration mean squared error.
    #[pyo3(signature = (x, y, gain=100.0, rate=0.01, iters=100, policy="sign", batch=None, seed=0, normalize=false))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        &mut self,
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
        gain: f64,
        rate: f64,
        iters: usize,
        policy: &str,
        batch: Option<usize>,
        seed: u64,
        normalize: bool,
    ) -> PyResult<Vec<f64>> {
        let cfg = TrainConfig {
            forward_gain: gain,
            rate,
            max_iters: iters,
            batch_size: batch,
            policy: parse_policy(policy)?,
            seed,
            normalize_error_by_batch: normalize,
        };
        let (model, trace) =
            fl::fit(&self.inner, &x_block(&x)?, &columns(&y)?, &cfg).map_err(to_py)?;
        self.inner = model;
        Ok(trace.records.iter().map(|r| r.mse).collect())
    }

    /// Error matrix `E` for the current weights under `policy`.
    #[pyo3(signature = (x, y, policy="sign", normalize=false))]
    fn error_matrix(
        &self,
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
        policy: &str,
        normalize: bool,
    ) -> PyResult<Vec<Vec<f64>>> {
        let xb = x_block(&x)?;
        let pred = fl::forward_predict(&self.inner, &xb).map_err(to_py)?;
        let e = fl::compute_error_matrix(
            &xb,
            &columns(&y)?,
            &pred,
            parse_policy(policy)?,
            &self.inner.activation,
            normalize,
        )
        .map_err(to_py)?;
        Ok(as_rows(&e))
    }

    /// Negative gradient of the mean squared error.
    fn gradient(&self, x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let xb = x_block(&x)?;
        let pred = fl::forward_predict(&self.inner, &xb).map_err(to_py)?;
        let g = fl::gd_baseline_error(&xb, &columns(&y)?, &pred, &self.inner.activation)
            .map_err(to_py)?;
        Ok(as_rows(&g))
    }
}

#[pyclass(name = "DeepModel")]
struct PyDeep {
    inner: fl::DeepModel,
    feature_mean: Option<Matrix>,
}

impl PyDeep {
    fn centered(&self, x: &[Vec<f64>]) -> PyResult<Matrix> {
        let raw = columns(x)?;
        let centered = match &self.feature_mean {
            Some(mean) if mean.rows() == raw.rows() => {
                Matrix::from_fn(raw.rows(), raw.cols(), |r, c| raw[(r, c)] - mean[(r, 0)])
            }
            Some(mean) => {
                return Err(PyValueError::new_err(format!(
                    "expected {} features",
                    mean.rows()
                )))
            }
            None => raw,
        };
        Ok(centered.with_ones_row())
    }
}

#[pymethods]
impl PyDeep {
    #[new]
    #[pyo3(signature = (dims, activation="leaky-relu", output_activation="softmax", rate=1e-4, seed=0))]
    fn new(
        dims: Vec<usize>,
        activation: &str,
        output_activation: &str,
        rate: f64,
        seed: u64,
    ) -> PyResult<Self> {
        if dims.len() < 2 {
            return Err(PyValueError::new_err(
                "dims needs at least an input and an output width",
            ));
        }
        let specs = fl::LayerSpec::stack(
            &dims,
            parse_activation(activation)?,
            parse_activation(output_activation)?,
        );
        Ok(Self {
            inner: fl::DeepModel::new(&specs, rate, seed).map_err(to_py)?,
            feature_mean: None,
        })
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        let specs = self.inner.specs();
        std::iter::once(specs[0].in_dim)
            .chain(specs.iter().map(|s| s.out_dim))
            .collect()
    }

    fn weights(&self, layer: usize) -> PyResult<Vec<Vec<f64>>> {
        self.inner
            .layers()
            .get(layer)
            .map(|l| as_rows(&l.weights))
            .ok_or_else(|| PyValueError::new_err(format!("no layer {layer}")))
    }

    fn rates(&self, layer: usize) -> PyResult<Vec<Vec<f64>>> {
        self.inner
            .rates()
            .get(layer)
            .map(as_rows)
            .ok_or_else(|| PyValueError::new_err(format!("no layer {layer}")))
    }

    /// Outputs, one row per sample. Inputs are centered with the training
    /// mean once `fit` has run.
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let y = self.inner.predict(&self.centered(&x)?).map_err(to_py)?;
        Ok(samples_as_rows(&y))
    }

    fn accuracy(&self, x: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
        self.inner
            .accuracy(&self.centered(&x)?, &labels)
            .map_err(to_py)
    }

    /// Trains on centered data (the training mean is stored for later
    /// calls) and returns one dict of metrics per epoch.
    #[pyo3(signature = (
        x, labels, test_x=None, test_labels=None, epochs=10, batch=64, gain=100.0, rate=1e-4,
        policy="magnitude", normalize=true, adapt=true, rate_min=3e-5, rate_max=3e-4, seed=0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        x: Vec<Vec<f64>>,
        labels: Vec<usize>,
        test_x: Option<Vec<Vec<f64>>>,
        test_labels: Option<Vec<usize>>,
        epochs: usize,
        batch: usize,
        gain: f64,
        rate: f64,
        policy: &str,
        normalize: bool,
        adapt: bool,
        rate_min: f64,
        rate_max: f64,
        seed: u64,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let specs = self.inner.specs();
        let top = specs.last().expect("at least one layer");
        let encoding = if top.activation == Activation::Tanh {
            LabelEncoding::PlusMinusOne
        } else {
            LabelEncoding::ZeroOne
        };
        let classes = top.out_dim;
        let train = prepare(
            &RawDataset::new(columns(&x)?, labels).map_err(to_py)?,
            encoding,
            classes,
            None,
        )
        .map_err(to_py)?;
        let test = match (test_x, test_labels) {
            (Some(tx), Some(tl)) => Some(
                prepare(
                    &RawDataset::new(columns(&tx)?, tl).map_err(to_py)?,
                    encoding,
                    classes,
                    Some(&train.feature_mean),
                )
                .map_err(to_py)?,
            ),
            (None, None) => None,
            _ => {
                return Err(PyValueError::new_err(
                    "pass both test_x and test_labels or neither",
                ))
            }
        };
        let policy = parse_policy(policy)?;
        let cfg = DeepConfig {
            forward_gain: gain,
            rate,
            input_policy: policy,
            hidden_policy: policy,
            normalize_error_by_batch: normalize,
            adaptation: adapt.then_some(RateAdaptation {
                rate_min,
                rate_max,
                ..RateAdaptation::default()
            }),
            batch_size: batch,
            epochs,
            seed,
        };
        let history =
            fl::fit_deep(&mut self.inner, &train, test.as_ref(), &cfg, |_| {}).map_err(to_py)?;
        self.feature_mean = Some(train.feature_mean);
        history
            .iter()
            .map(|m| {
                let d = PyDict::new(py);
                d.set_item("epoch", m.epoch)?;
                d.set_item("train_acc", m.train_accuracy)?;
                d.set_item("test_acc", m.test_accuracy)?;
                d.set_item("mean_sq_diff", m.mean_sq_diff)?;
                Ok(d)
            })
            .collect()
    }

    /// Writes weights, rates and error signs. The centering mean is not
    /// part of the checkpoint.
    fn save(&self, path: &str) -> PyResult<()> {
        fl::save_checkpoint(&self.inner, path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: fl::load_checkpoint(path).map_err(to_py)?,
            feature_mean: None,
        })
    }
}

/// Images as rows of pixel values in `[0, 1]`.
#[pyfunction]
fn load_idx_images(path: &str) -> PyResult<Vec<Vec<f64>>> {
    Ok(samples_as_rows(
        &fl::data::load_idx_images(path).map_err(to_py)?,
    ))
}

#[pyfunction]
fn load_idx_labels(path: &str) -> PyResult<Vec<u8>> {
    fl::data::load_idx_labels(path).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "feedback_learn")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(sgn, m)?)?;
    m.add_function(wrap_pyfunction!(invert, m)?)?;
    m.add_function(wrap_pyfunction!(load_idx_images, m)?)?;
    m.add_function(wrap_pyfunction!(load_idx_labels, m)?)?;
    m.add_class::<PySingleLayer>()?;
    m.add_class::<PyDeep>()?;
    Ok(())
}
