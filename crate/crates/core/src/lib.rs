//! Learning by negative feedback instead of gradients.
//!
//! A high-gain forward path wrapped in a backward path settles at the
//! inverse of the backward function. Applied to weights, the same loop
//! trains a layer from the sign of the input and the output difference
//! only, so it also works through activations whose derivative is zero
//! almost everywhere.

pub mod checkpoint;
pub mod data;
pub mod deep;
pub mod error;
pub mod feedback;
pub mod numerics;
pub mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use deep::{
    adaptive_rate_update, fit_deep, layer_error, DeepConfig, DeepModel, EpochMetrics, Layer,
    LayerSpec, RateAdaptation,
};
pub use error::{Error, Result};
pub use feedback::{is_stable, run_feedback_loop, FeedbackConfig, LoopIterate, LoopTrace};
pub use numerics::{apply_activation, apply_sign_policy, sgn, Activation, Matrix, SignPolicy};
pub use trainer::{
    compute_error_matrix, evaluate, fit, fit_gradient_descent, forward_predict, gd_baseline_error,
    gd_step, train_step, MetricRecord, MetricTrace, SingleLayerModel, TrainConfig,
};
