//! Scalar negative-feedback loop.
//!
//! A forward block `F(e) = A·e` drives the output `x_o`; the backward block
//! `B` maps it back to the input side where it is subtracted from `x_i`.
//! With a large forward gain the loop settles where
//! `x_i = x_o / (A·s) + B(x_o)`, i.e. `x_o ≈ B⁻¹(x_i)`.
//!
//! A negative backward gain is handled by the sign `s` applied to the error,
//! never by negating `A`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackConfig {
    pub forward_gain: f64,
    /// Fraction of the distance toward the new estimate taken per iteration.
    pub rate: f64,
    pub max_iters: usize,
    /// Threshold on the loop-equation residual.
    pub tolerance: f64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            forward_gain: 100.0,
            rate: 0.005,
            max_iters: 100_000,
            tolerance: 1e-12,
        }
    }
}

impl FeedbackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.forward_gain > 0.0 && self.forward_gain.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "forward gain must be positive, got {}",
                self.forward_gain
            )));
        }
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rate must lie in (0, 1], got {}",
                self.rate
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be non-negative, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopIterate {
    pub iteration: usize,
    pub output: f64,
    /// `x_i − B(x_o)`
    pub residual: f64,
    /// `x_i − x_o/(A·s) − B(x_o)`, zero exactly at the loop's fixed point.
    pub loop_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopTrace {
    pub iterates: Vec<LoopIterate>,
    pub converged: bool,
}

impl LoopTrace {
    pub fn last(&self) -> &LoopIterate {
        self.iterates
            .last()
            .expect("trace always holds the initial state")
    }
}

/// Negative feedback requires a positive product of forward and backward gain.
pub fn is_stable(forward_gain: f64, backward_gain: f64) -> bool {
    forward_gain * backward_gain > 0.0
}

/// Runs the relaxed loop `x_o ← x_o + (A·s·(x_i − B(x_o)) − x_o)·rate` from
/// `x_o = 0` until the loop-equation residual is within tolerance or the
/// iteration budget is spent.
///
/// The relaxed update is a contraction near the fixed point only when
/// `rate·(1 + A·|B′|) < 2`; larger rates oscillate and end in `NonFinite`.
pub fn run_feedback_loop<B>(
    backward_fn: B,
    backward_sign: f64,
    x_input: f64,
    cfg: &FeedbackConfig,
) -> Result<(f64, LoopTrace)>
where
    B: Fn(f64) -> f64,
{
    cfg.validate()?;
    if backward_sign != 1.0 && backward_sign != -1.0 {
        return Err(Error::InvalidConfig(format!(
            "backward sign must be +1 or -1, got {backward_sign}"
        )));
    }
    if !x_input.is_finite() {
        return Err(Error::NonFinite("feedback loop input".into()));
    }
    let gain = cfg.forward_gain * backward_sign;
    let observe = |iteration: usize, output: f64| -> Result<LoopIterate> {
        let fed_back = backward_fn(output);
        let residual = x_input - fed_back;
        let loop_residual = residual - output / gain;
        if !(output.is_finite() && residual.is_finite() && loop_residual.is_finite()) {
            return Err(Error::NonFinite(format!(
                "feedback loop iterate {iteration} (x_o = {output}); the loop is unstable \
                 unless A·β > 0, check the backward sign"
            )));
        }
        Ok(LoopIterate {
            iteration,
            output,
            residual,
            loop_residual,
        })
    };

    let mut current = observe(0, 0.0)?;
    let mut iterates = vec![current];
    let mut converged = current.loop_residual.abs() <= cfg.tolerance;
    let mut iteration = 0;
    while !converged && iteration < cfg.max_iters {
        iteration += 1;
        let target = gain * current.residual;
        let output = current.output + (target - current.output) * cfg.rate;
        current = observe(iteration, output)?;
        iterates.push(current);
        converged = current.loop_residual.abs() <= cfg.tolerance;
    }
    Ok((
        current.output,
        LoopTrace {
            iterates,
            converged,
        },
    ))
}
