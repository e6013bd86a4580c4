//! Multi-layer feedback learning.
//!
//! Each layer is trained with the single-layer rule, except that its
//! difference vector is not `Y − Y′` but is carried down from the layer
//! above through the sign of that layer's weights:
//! `dˡ⁻¹ = sgn(Wˡ without bias row) · dˡ`. Every supported activation has
//! a non-negative gain, so `sgn(σᵍ·w)` is just `sgn(w)`.
//!
//! Per-weight rates adapt RProp-style on the sign of each weight's error
//! between consecutive steps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{BatchOrder, PreparedDataset};
use crate::error::{Error, Result};
use crate::numerics::{apply_activation, gain_sign, sgn, Activation, Matrix, SignPolicy};
use crate::trainer::{
    argmax_accuracy, error_from_difference, relax_toward, signum0, uniform_init,
    validate_gain_and_rate,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    /// Dense stack over `dims` with `hidden` on every layer but the last,
    /// which uses `output`.
    pub fn stack(dims: &[usize], hidden: Activation, output: Activation) -> Vec<LayerSpec> {
        let n = dims.len().saturating_sub(1);
        (0..n)
            .map(|l| LayerSpec {
                in_dim: dims[l],
                out_dim: dims[l + 1],
                activation: if l + 1 == n { output } else { hidden },
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `(in_dim+1)×out_dim`, bias in the last row.
    pub weights: Matrix,
    pub activation: Activation,
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            in_dim: self.weights.rows() - 1,
            out_dim: self.weights.cols(),
            activation: self.activation,
        }
    }
}

/// RProp-style multiplicative rate adaptation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateAdaptation {
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub rate_min: f64,
    pub rate_max: f64,
}

impl Default for RateAdaptation {
    fn default() -> Self {
        Self {
            eta_plus: 1.2,
            eta_minus: 0.5,
            rate_min: 1e-6,
            rate_max: 0.1,
        }
    }
}

impl RateAdaptation {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_plus > 1.0 && self.eta_plus.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "eta_plus must exceed 1, got {}",
                self.eta_plus
            )));
        }
        if !(self.eta_minus > 0.0 && self.eta_minus < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eta_minus must lie in (0, 1), got {}",
                self.eta_minus
            )));
        }
        if !(self.rate_min > 0.0 && self.rate_min <= self.rate_max && self.rate_max <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rate bounds must satisfy 0 < min <= max <= 1, got [{}, {}]",
                self.rate_min, self.rate_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeepConfig {
    pub forward_gain: f64,
    /// Initial per-weight rate.
    pub rate: f64,
    /// Policy for the first layer, whose input is the data block.
    pub input_policy: SignPolicy,
    /// Policy for layers fed by hidden activations.
    pub hidden_policy: SignPolicy,
    pub normalize_error_by_batch: bool,
    /// `None` keeps every rate fixed at `rate`.
    pub adaptation: Option<RateAdaptation>,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for DeepConfig {
    fn default() -> Self {
        Self {
            forward_gain: 100.0,
            rate: 1e-4,
            input_policy: SignPolicy::MagnitudeWeighted,
            hidden_policy: SignPolicy::MagnitudeWeighted,
            normalize_error_by_batch: true,
            adaptation: Some(RateAdaptation {
                eta_plus: 1.2,
                eta_minus: 0.5,
                rate_min: 3e-5,
                rate_max: 3e-4,
            }),
            batch_size: 64,
            epochs: 10,
            seed: 0,
        }
    }
}

impl DeepConfig {
    pub fn validate(&self) -> Result<()> {
        validate_gain_and_rate(self.forward_gain, self.rate)?;
        self.input_policy.validate()?;
        self.hidden_policy.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if let Some(a) = &self.adaptation {
            a.validate()?;
            if !(a.rate_min <= self.rate && self.rate <= a.rate_max) {
                return Err(Error::InvalidConfig(format!(
                    "initial rate {} outside adaptive bounds [{}, {}]",
                    self.rate, a.rate_min, a.rate_max
                )));
            }
        }
        Ok(())
    }

    fn policy_for(&self, layer: usize) -> SignPolicy {
        if layer == 0 {
            self.input_policy
        } else {
            self.hidden_policy
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepModel {
    layers: Vec<Layer>,
    rates: Vec<Matrix>,
    prev_error_sign: Vec<Matrix>,
}

impl DeepModel {
    /// Randomly initialized model (uniform in `±1/√(in_dim+1)` per layer)
    /// with every per-weight rate set to `initial_rate`.
    pub fn new(specs: &[LayerSpec], initial_rate: f64, seed: u64) -> Result<Self> {
        check_specs(specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|s| Layer {
                weights: uniform_init(s.in_dim + 1, s.out_dim, &mut rng),
                activation: s.activation,
            })
            .collect();
        Self::from_layers(layers, initial_rate)
    }

    pub fn from_layers(layers: Vec<Layer>, initial_rate: f64) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(Layer::spec).collect();
        check_specs(&specs)?;
        if layers.iter().any(|l| !l.weights.is_finite()) {
            return Err(Error::NonFinite("initial weights".into()));
        }
        if !(initial_rate > 0.0 && initial_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rate must lie in (0, 1], got {initial_rate}"
            )));
        }
        let rates = layers
            .iter()
            .map(|l| Matrix::filled(l.weights.rows(), l.weights.cols(), initial_rate))
            .collect();
        let prev_error_sign = layers
            .iter()
            .map(|l| Matrix::zeros(l.weights.rows(), l.weights.cols()))
            .collect();
        Ok(Self {
            layers,
            rates,
            prev_error_sign,
        })
    }

    pub(crate) fn from_parts(
        layers: Vec<Layer>,
        rates: Vec<Matrix>,
        prev_error_sign: Vec<Matrix>,
    ) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(Layer::spec).collect();
        check_specs(&specs)?;
        for ((l, r), s) in layers.iter().zip(&rates).zip(&prev_error_sign) {
            if r.shape() != l.weights.shape() || s.shape() != l.weights.shape() {
                return Err(Error::shape("DeepModel", l.weights.shape(), r.shape()));
            }
        }
        Ok(Self {
            layers,
            rates,
            prev_error_sign,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn rates(&self) -> &[Matrix] {
        &self.rates
    }

    pub fn prev_error_signs(&self) -> &[Matrix] {
        &self.prev_error_sign
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.rows() * l.weights.cols())
            .sum()
    }

    /// Outputs of every layer: `y⁰` is `x_block` itself, then one entry per
    /// layer. Hidden outputs are stored without their bias row.
    pub fn forward_pass(&self, x_block: &Matrix) -> Result<Vec<Matrix>> {
        let first = &self.layers[0].weights;
        if x_block.rows() != first.rows() {
            return Err(Error::shape("forward_pass", first.shape(), x_block.shape()));
        }
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(x_block.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = if l == 0 {
                layer.weights.t_matmul(x_block)?
            } else {
                layer.weights.t_matmul(&outputs[l].with_ones_row())?
            };
            outputs.push(apply_activation(&layer.activation, &z));
        }
        Ok(outputs)
    }

    pub fn predict(&self, x_block: &Matrix) -> Result<Matrix> {
        Ok(self
            .forward_pass(x_block)?
            .pop()
            .expect("at least one layer"))
    }

    /// Difference vectors for every layer, index `l` holding the difference
    /// at layer `l`'s output. The last entry is `d_top` itself.
    pub fn backpropagate_difference(&self, d_top: &Matrix) -> Result<Vec<Matrix>> {
        let top = self.layers.last().expect("at least one layer");
        if d_top.rows() != top.weights.cols() {
            return Err(Error::shape(
                "backpropagate_difference",
                top.weights.shape(),
                d_top.shape(),
            ));
        }
        let n = self.layers.len();
        let mut diffs = vec![Matrix::zeros(0, 0); n];
        diffs[n - 1] = d_top.clone();
        for l in (1..n).rev() {
            let layer = &self.layers[l];
            let g = gain_sign(&layer.activation);
            // bias row excluded: it has no upstream unit to receive difference
            let signs = layer.weights.without_last_row().map(|w| sgn(g * w));
            diffs[l - 1] = signs.matmul(&diffs[l])?;
        }
        Ok(diffs)
    }

    /// One feedback update of every layer on a batch. Returns the mean
    /// squared top-layer difference before the update. On error the model
    /// is left unchanged.
    pub fn train_step(
        &mut self,
        x_block: &Matrix,
        y_target: &Matrix,
        cfg: &DeepConfig,
    ) -> Result<f64> {
        let outputs = self.forward_pass(x_block)?;
        let y_pred = outputs.last().expect("at least one layer");
        if y_target.shape() != y_pred.shape() {
            return Err(Error::shape(
                "deep_train_step",
                y_pred.shape(),
                y_target.shape(),
            ));
        }
        let d_top = y_target.sub(y_pred)?;
        let diffs = self.backpropagate_difference(&d_top)?;

        let mut new_weights = Vec::with_capacity(self.layers.len());
        let mut new_rates = Vec::with_capacity(self.layers.len());
        let mut new_signs = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 {
                x_block.clone()
            } else {
                outputs[l].with_ones_row()
            };
            let error = layer_error(
                &diffs[l],
                &input,
                &outputs[l + 1],
                cfg.policy_for(l),
                &layer.activation,
                cfg.normalize_error_by_batch,
            )?;
            let rates = &self.rates[l];
            let weights = relax_toward(&layer.weights, &error, cfg.forward_gain, |i| {
                rates.as_slice()[i]
            })
            .map_err(|_| Error::NonFinite(format!("layer {l} weights after update")))?;
            new_weights.push(weights);
            if let Some(adapt) = &cfg.adaptation {
                let sign = error.map(signum0);
                new_rates.push(adaptive_rate_update(
                    &self.prev_error_sign[l],
                    &sign,
                    rates,
                    adapt,
                )?);
                new_signs.push(sign);
            }
        }
        for (layer, w) in self.layers.iter_mut().zip(new_weights) {
            layer.weights = w;
        }
        if cfg.adaptation.is_some() {
            self.rates = new_rates;
            self.prev_error_sign = new_signs;
        }
        Ok(d_top.mean_square())
    }

    /// Fraction of samples whose predicted class (argmax) matches `labels`.
    pub fn accuracy(&self, x_block: &Matrix, labels: &[usize]) -> Result<f64> {
        let pred = self.predict(x_block)?;
        if pred.cols() != labels.len() {
            return Err(Error::shape("accuracy", pred.shape(), (labels.len(), 1)));
        }
        if labels.is_empty() {
            return Ok(0.0);
        }
        let hits = pred
            .column_argmax()
            .iter()
            .zip(labels)
            .filter(|(a, b)| *a == *b)
            .count();
        Ok(hits as f64 / labels.len() as f64)
    }

    /// Argmax accuracy against one-hot targets.
    pub fn target_accuracy(&self, x_block: &Matrix, y_target: &Matrix) -> Result<f64> {
        Ok(argmax_accuracy(&self.predict(x_block)?, y_target))
    }
}

fn check_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::InvalidConfig(
            "a model needs at least one layer".into(),
        ));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "layer {i} has a zero dimension"
            )));
        }
        s.activation.validate()?;
        if i > 0 && specs[i - 1].out_dim != s.in_dim {
            return Err(Error::shape(
                "layer chain",
                (specs[i - 1].in_dim, specs[i - 1].out_dim),
                (s.in_dim, s.out_dim),
            ));
        }
    }
    Ok(())
}

/// Error matrix of one layer, `(in_dim+1)×out_dim`: the single-layer
/// `E = S·Dᵀ` with the layer input `y_prev` (bias row included) in place
/// of `X` and the layer's difference vector in place of `D`. `y_out` is the
/// layer's output, needed only by policies that use the gain magnitude.
pub fn layer_error(
    d_layer: &Matrix,
    y_prev: &Matrix,
    y_out: &Matrix,
    policy: SignPolicy,
    act: &Activation,
    normalize: bool,
) -> Result<Matrix> {
    if d_layer.shape() != y_out.shape() {
        return Err(Error::shape("layer_error", d_layer.shape(), y_out.shape()));
    }
    error_from_difference(y_prev, d_layer.clone(), y_out, policy, act, normalize)
}

/// Entrywise RProp rule: grow the rate where the error sign repeated,
/// shrink it where it flipped, keep it where either sign is zero; clamp to
/// the bounds.
pub fn adaptive_rate_update(
    prev_sign: &Matrix,
    curr_sign: &Matrix,
    rates: &Matrix,
    params: &RateAdaptation,
) -> Result<Matrix> {
    if prev_sign.shape() != rates.shape() || curr_sign.shape() != rates.shape() {
        return Err(Error::shape(
            "adaptive_rate_update",
            prev_sign.shape(),
            curr_sign.shape(),
        ));
    }
    let data = prev_sign
        .iter()
        .zip(curr_sign.iter())
        .zip(rates.iter())
        .map(|((&p, &c), &r)| {
            let agreement = p * c;
            let next = if agreement > 0.0 {
                r * params.eta_plus
            } else if agreement < 0.0 {
                r * params.eta_minus
            } else {
                r
            };
            next.clamp(params.rate_min, params.rate_max)
        })
        .collect();
    Matrix::new(rates.rows(), rates.cols(), data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Mean over the epoch's batches of the mean squared top difference.
    pub mean_sq_diff: f64,
}

/// Trains for `cfg.epochs` epochs of seeded shuffled mini-batches,
/// reporting metrics after each epoch through `on_epoch`.
pub fn fit_deep(
    model: &mut DeepModel,
    train: &PreparedDataset,
    test: Option<&PreparedDataset>,
    cfg: &DeepConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    let mut order = BatchOrder::new(train.len(), cfg.batch_size, batch_seed(cfg.seed), true);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut total = 0.0;
        let batches = order.epoch();
        for cols in &batches {
            let x = train.x_block.select_columns(cols);
            let y = train.y_block.select_columns(cols);
            total += model.train_step(&x, &y, cfg)?;
        }
        let metrics = EpochMetrics {
            epoch,
            train_accuracy: model.accuracy(&train.x_block, &train.labels)?,
            test_accuracy: test
                .map(|t| model.accuracy(&t.x_block, &t.labels))
                .transpose()?,
            mean_sq_diff: if batches.is_empty() {
                0.0
            } else {
                total / batches.len() as f64
            },
        };
        on_epoch(&metrics);
        history.push(metrics);
    }
    Ok(history)
}

/// Batch order draws from a stream separate from weight initialization.
pub fn batch_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}
