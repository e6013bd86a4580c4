//! Seeded synthetic regression problems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{apply_activation, Activation, Matrix};

/// Single-variable staircase regression: `x` uniform in `x_range`,
/// `y = staircase(w_true·x)`. Returns the `2×m` block `[x; 1]` and the
/// `1×m` targets.
pub fn make_staircase_dataset(
    m: usize,
    w_true: f64,
    act: &Activation,
    x_range: (f64, f64),
    seed: u64,
) -> Result<(Matrix, Matrix)> {
    if m == 0 {
        return Err(Error::InvalidConfig(
            "staircase dataset needs at least one sample".into(),
        ));
    }
    if !matches!(act, Activation::Staircase { .. }) {
        return Err(Error::InvalidConfig(format!(
            "expected a staircase activation, got {act}"
        )));
    }
    act.validate()?;
    let (lo, hi) = x_range;
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidConfig(format!("bad x range [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..m).map(|_| rng.gen_range(lo..hi)).collect();
    let x = Matrix::row(&xs);
    let y = apply_activation(act, &x.scale(w_true));
    Ok((x.with_ones_row(), y))
}

/// Noisy linear regression `y = W_trueᵀ·[x; 1] + noise` with features
/// uniform in `[−1, 1]`, true weights uniform in `[−1, 1]` and noise
/// uniform in `[−noise, noise]`. Returns `(x_block, y_block, w_true)`.
pub fn make_linear_dataset(
    m: usize,
    n_features: usize,
    n_outputs: usize,
    noise: f64,
    seed: u64,
) -> Result<(Matrix, Matrix, Matrix)> {
    if m == 0 || n_features == 0 || n_outputs == 0 {
        return Err(Error::InvalidConfig(
            "linear dataset dimensions must be positive".into(),
        ));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "noise must be non-negative, got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_true = Matrix::from_fn(n_features + 1, n_outputs, |_, _| rng.gen_range(-1.0..=1.0));
    let x = Matrix::from_fn(n_features, m, |_, _| rng.gen_range(-1.0..=1.0)).with_ones_row();
    let clean = w_true.t_matmul(&x)?;
    let mut y = clean;
    if noise > 0.0 {
        let jitter = Matrix::from_fn(y.rows(), y.cols(), |_, _| rng.gen_range(-noise..=noise));
        y = y.add(&jitter)?;
    }
    Ok((x, y, w_true))
}
