//! Matrix container, activations and sign policies.

mod activation;
mod matrix;
mod policy;

pub use activation::{
    apply_activation, gain_sign, sgn, sgn_matrix, Activation, DEFAULT_LEAKY_SLOPE,
};
pub use matrix::Matrix;
pub use policy::{apply_sign_policy, output_gain, SignPolicy};
