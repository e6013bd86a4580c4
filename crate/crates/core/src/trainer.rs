//! Single-layer feedback learning: regression and multi-class
//! classification with one weight matrix, plus the squared-error gradient
//! baseline it is compared against.
//!
//! Data blocks hold one sample per column with a trailing row of ones for
//! the bias, so a model over `n` features has an `(n+1)×c` weight matrix
//! whose last row is the bias.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::BatchOrder;
use crate::error::{Error, Result};
use crate::numerics::{
    apply_activation, apply_sign_policy, output_gain, Activation, Matrix, SignPolicy,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SingleLayerModel {
    pub weights: Matrix,
    pub activation: Activation,
}

impl SingleLayerModel {
    pub fn new(weights: Matrix, activation: Activation) -> Result<Self> {
        activation.validate()?;
        if !weights.is_finite() {
            return Err(Error::NonFinite("initial weights".into()));
        }
        Ok(Self {
            weights,
            activation,
        })
    }

    pub fn zeros(n_features: usize, n_outputs: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(n_features + 1, n_outputs),
            activation,
        }
    }

    /// Uniform initialization in `±1/√(n+1)`.
    pub fn random(n_features: usize, n_outputs: usize, activation: Activation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            weights: uniform_init(n_features + 1, n_outputs, &mut rng),
            activation,
        }
    }
}

/// Weights uniform in `[−r, r]` with `r = 1/√rows`; `rows` counts the bias.
pub fn uniform_init<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let r = 1.0 / (rows as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-r..=r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Gain `A` of the forward block `F(e) = A·e`.
    pub forward_gain: f64,
    pub rate: f64,
    /// Number of weight updates.
    pub max_iters: usize,
    /// `None` trains on the full batch every iteration.
    pub batch_size: Option<usize>,
    pub policy: SignPolicy,
    pub seed: u64,
    /// Divide the error matrix by the batch size. Off by default: the error
    /// is a sum over samples.
    pub normalize_error_by_batch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            forward_gain: 100.0,
            rate: 0.01,
            max_iters: 100,
            batch_size: None,
            policy: SignPolicy::SignOnly,
            seed: 0,
            normalize_error_by_batch: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        validate_gain_and_rate(self.forward_gain, self.rate)?;
        if self.batch_size == Some(0) {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        self.policy.validate()
    }
}

pub(crate) fn validate_gain_and_rate(forward_gain: f64, rate: f64) -> Result<()> {
    if !(forward_gain > 0.0 && forward_gain.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "forward gain must be positive, got {forward_gain}"
        )));
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "rate must lie in (0, 1], got {rate}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub iteration: usize,
    /// Mean of `(y − y′)²` over the whole dataset after the update.
    pub mse: f64,
    /// Fraction of columns whose argmax matches the target; only for
    /// multi-output targets.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTrace {
    pub records: Vec<MetricRecord>,
}

fn check_block(model_rows: usize, x_block: &Matrix) -> Result<()> {
    if x_block.rows() != model_rows {
        return Err(Error::shape(
            "forward_predict",
            (model_rows, 0),
            x_block.shape(),
        ));
    }
    Ok(())
}

/// `Y′ = σ(Wᵀ·X)`, shape `c×m`.
pub fn forward_predict(model: &SingleLayerModel, x_block: &Matrix) -> Result<Matrix> {
    check_block(model.weights.rows(), x_block)?;
    let z = model.weights.t_matmul(x_block)?;
    Ok(apply_activation(&model.activation, &z))
}

/// Elementwise sign with zero kept at zero, for differences and error
/// directions where "no evidence" must not push either way.
pub(crate) fn signum0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Error matrix `E = S·Dᵀ` of shape `(n+1)×c`, where `D = Y − Y′` and `S`
/// comes from the sign policy. With `normalize` the sum over samples
/// becomes a mean.
pub fn compute_error_matrix(
    x_block: &Matrix,
    y_target: &Matrix,
    y_pred: &Matrix,
    policy: SignPolicy,
    act: &Activation,
    normalize: bool,
) -> Result<Matrix> {
    if y_target.shape() != y_pred.shape() {
        return Err(Error::shape(
            "compute_error_matrix",
            y_target.shape(),
            y_pred.shape(),
        ));
    }
    if x_block.cols() != y_target.cols() {
        return Err(Error::shape(
            "compute_error_matrix",
            x_block.shape(),
            y_target.shape(),
        ));
    }
    error_from_difference(
        x_block,
        y_target.sub(y_pred)?,
        y_pred,
        policy,
        act,
        normalize,
    )
}

/// `E` from an already formed difference `diff`; `y_out` feeds the gain.
pub(crate) fn error_from_difference(
    x_block: &Matrix,
    mut diff: Matrix,
    y_out: &Matrix,
    policy: SignPolicy,
    act: &Activation,
    normalize: bool,
) -> Result<Matrix> {
    if x_block.cols() != diff.cols() {
        return Err(Error::shape("error matrix", x_block.shape(), diff.shape()));
    }
    if policy.signs_difference() {
        diff = diff.map(signum0);
    }
    if let Some(gain) = output_gain(policy, act, y_out)? {
        diff = diff.hadamard(&gain)?;
    }
    let s = apply_sign_policy(policy, x_block, act)?;
    let e = s.matmul_t(&diff)?;
    Ok(if normalize {
        e.scale(1.0 / x_block.cols() as f64)
    } else {
        e
    })
}

/// `W + (A·E − W)·rate`, entrywise. Shared with the deep trainer so both
/// paths round identically.
pub(crate) fn relax_toward(
    weights: &Matrix,
    error: &Matrix,
    forward_gain: f64,
    rate: impl Fn(usize) -> f64,
) -> Result<Matrix> {
    if weights.shape() != error.shape() {
        return Err(Error::shape(
            "weight update",
            weights.shape(),
            error.shape(),
        ));
    }
    let data: Vec<f64> = weights
        .iter()
        .zip(error.iter())
        .enumerate()
        .map(|(i, (&w, &e))| w + (forward_gain * e - w) * rate(i))
        .collect();
    Matrix::new(weights.rows(), weights.cols(), data)
        .map_err(|_| Error::NonFinite("updated weights; lower the rate or the forward gain".into()))
}

/// One pass of the feedback loop: predict, form `E`, move the weights a
/// `rate` fraction of the way toward `W′ = A·E`.
///
/// When `E` is exactly zero the weights decay toward zero; the equilibrium
/// of this rule is `W = A·E(W)`, not `E(W) = 0`.
pub fn train_step(
    model: &SingleLayerModel,
    x_block: &Matrix,
    y_target: &Matrix,
    cfg: &TrainConfig,
) -> Result<SingleLayerModel> {
    cfg.validate()?;
    let y_pred = forward_predict(model, x_block)?;
    let error = compute_error_matrix(
        x_block,
        y_target,
        &y_pred,
        cfg.policy,
        &model.activation,
        cfg.normalize_error_by_batch,
    )?;
    let weights = relax_toward(&model.weights, &error, cfg.forward_gain, |_| cfg.rate)?;
    Ok(SingleLayerModel {
        weights,
        activation: model.activation,
    })
}

/// Runs `cfg.max_iters` feedback updates, on the full batch or on seeded
/// shuffled mini-batches, recording whole-dataset metrics after each.
pub fn fit(
    model: &SingleLayerModel,
    x_block: &Matrix,
    y_target: &Matrix,
    cfg: &TrainConfig,
) -> Result<(SingleLayerModel, MetricTrace)> {
    cfg.validate()?;
    fit_with(model, x_block, y_target, cfg, |m, x, y| {
        train_step(m, x, y, cfg)
    })
}

/// Same schedule as [`fit`] but each update is a plain gradient-descent
/// step on the squared error.
pub fn fit_gradient_descent(
    model: &SingleLayerModel,
    x_block: &Matrix,
    y_target: &Matrix,
    cfg: &TrainConfig,
    learning_rate: f64,
) -> Result<(SingleLayerModel, MetricTrace)> {
    cfg.validate()?;
    fit_with(model, x_block, y_target, cfg, |m, x, y| {
        gd_step(m, x, y, learning_rate)
    })
}

fn fit_with<F>(
    model: &SingleLayerModel,
    x_block: &Matrix,
    y_target: &Matrix,
    cfg: &TrainConfig,
    mut step: F,
) -> Result<(SingleLayerModel, MetricTrace)>
where
    F: FnMut(&SingleLayerModel, &Matrix, &Matrix) -> Result<SingleLayerModel>,
{
    check_block(model.weights.rows(), x_block)?;
    if x_block.cols() != y_target.cols() || y_target.rows() != model.weights.cols() {
        return Err(Error::shape("fit", x_block.shape(), y_target.shape()));
    }
    let m = x_block.cols();
    let batch = cfg.batch_size.unwrap_or(m).min(m.max(1));
    let full_batch = batch >= m;
    let mut order = BatchOrder::new(m, batch, cfg.seed, true);
    let mut current = model.clone();
    let mut trace = MetricTrace::default();
    for iteration in 1..=cfg.max_iters {
        current = if full_batch {
            step(&current, x_block, y_target)?
        } else {
            let cols = order.next_batch();
            step(
                &current,
                &x_block.select_columns(&cols),
                &y_target.select_columns(&cols),
            )?
        };
        let (mse, accuracy) = evaluate(&current, x_block, y_target)?;
        trace.records.push(MetricRecord {
            iteration,
            mse,
            accuracy,
        });
    }
    Ok((current, trace))
}

/// Mean squared difference and, for multi-output targets, argmax accuracy.
pub fn evaluate(
    model: &SingleLayerModel,
    x_block: &Matrix,
    y_target: &Matrix,
) -> Result<(f64, Option<f64>)> {
    let y_pred = forward_predict(model, x_block)?;
    let mse = y_target.sub(&y_pred)?.mean_square();
    let accuracy = (y_target.rows() > 1).then(|| argmax_accuracy(&y_pred, y_target));
    Ok((mse, accuracy))
}

pub(crate) fn argmax_accuracy(y_pred: &Matrix, y_target: &Matrix) -> f64 {
    if y_pred.cols() == 0 {
        return 0.0;
    }
    let hits = y_pred
        .column_argmax()
        .iter()
        .zip(y_target.column_argmax())
        .filter(|(a, b)| **a == *b)
        .count();
    hits as f64 / y_pred.cols() as f64
}

/// Negative gradient `−∂q/∂W` of `q = (1/m)·Σₖ‖y⁽ᵏ⁾ − y′⁽ᵏ⁾‖²`.
///
/// Evaluated with explicit sums over samples rather than through the error
/// matrix machinery. Softmax uses its full Jacobian; the staircase has zero
/// derivative away from its jumps, so its gradient vanishes.
pub fn gd_baseline_error(
    x_block: &Matrix,
    y_target: &Matrix,
    y_pred: &Matrix,
    act: &Activation,
) -> Result<Matrix> {
    if y_target.shape() != y_pred.shape() {
        return Err(Error::shape(
            "gd_baseline_error",
            y_target.shape(),
            y_pred.shape(),
        ));
    }
    if x_block.cols() != y_target.cols() {
        return Err(Error::shape(
            "gd_baseline_error",
            x_block.shape(),
            y_target.shape(),
        ));
    }
    let (n, m) = x_block.shape();
    let c = y_target.rows();
    // dq/dz per output and sample, up to the -2/m factor.
    let mut back = Matrix::zeros(c, m);
    for k in 0..m {
        match *act {
            Activation::Softmax => {
                let weighted: f64 = (0..c)
                    .map(|l| (y_target[(l, k)] - y_pred[(l, k)]) * y_pred[(l, k)])
                    .sum();
                for j in 0..c {
                    let d = y_target[(j, k)] - y_pred[(j, k)];
                    back[(j, k)] = y_pred[(j, k)] * (d - weighted);
                }
            }
            _ => {
                for j in 0..c {
                    let y = y_pred[(j, k)];
                    let slope = match *act {
                        Activation::Identity | Activation::Softmax => 1.0,
                        Activation::Tanh => 1.0 - y * y,
                        Activation::LeakyRelu { slope } => {
                            if y < 0.0 {
                                slope
                            } else {
                                1.0
                            }
                        }
                        Activation::Staircase { .. } => 0.0,
                    };
                    back[(j, k)] = (y_target[(j, k)] - y) * slope;
                }
            }
        }
    }
    let scale = 2.0 / m as f64;
    Ok(Matrix::from_fn(n, c, |i, j| {
        let mut acc = 0.0;
        for k in 0..m {
            acc += back[(j, k)] * x_block[(i, k)];
        }
        scale * acc
    }))
}

/// `W ← W + lr·(−∂q/∂W)`.
pub fn gd_step(
    model: &SingleLayerModel,
    x_block: &Matrix,
    y_target: &Matrix,
    learning_rate: f64,
) -> Result<SingleLayerModel> {
    let y_pred = forward_predict(model, x_block)?;
    let grad = gd_baseline_error(x_block, y_target, &y_pred, &model.activation)?;
    let weights = model.weights.add(&grad.scale(learning_rate))?;
    if !weights.is_finite() {
        return Err(Error::NonFinite("gradient-descent weights".into()));
    }
    Ok(SingleLayerModel {
        weights,
        activation: model.activation,
    })
}
