//! Rules turning the backward gain `β = σᵍ·x` into the multiplier `s` that
//! weights each sample's difference in the error matrix.
//!
//! The gain factors as (activation gain per sample and neuron) × (input per
//! sample and feature). [`apply_sign_policy`] produces the input-side factor
//! `S`, one entry per feature and sample. Policies that use the gain
//! magnitude also need the activation-side factor, which [`output_gain`]
//! supplies and the error computation folds into the difference matrix.
//! The product is the same `Σₖ s·(y − y′)` either way.

use std::fmt;
use std::str::FromStr;

use super::activation::{gain_sign, sgn};
use super::{Activation, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignPolicy {
    /// `s = sgn(β)`: pure feedback learning.
    SignOnly,
    /// `s = β`: reproduces gradient descent on squared error.
    RawBeta,
    /// `s = βⁿ` for odd `n`, which keeps the sign of `β`.
    OddPower(u32),
    /// `s = sgn(x)·|x|`: the difference weighted by input magnitude.
    MagnitudeWeighted,
    /// `s = sgn(β)` with the difference replaced by `sgn(y − y′)`.
    SignedDifference,
}

impl SignPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SignPolicy::OddPower(n) if n == 0 || n % 2 == 0 => Err(Error::InvalidConfig(format!(
                "odd-power exponent must be an odd positive integer, got {n}"
            ))),
            _ => Ok(()),
        }
    }

    /// Whether the difference `y − y′` is replaced by its elementwise sign.
    pub fn signs_difference(&self) -> bool {
        matches!(self, SignPolicy::SignedDifference)
    }

    /// Whether the policy uses the magnitude of the activation gain, which
    /// a staircase does not have.
    pub fn needs_gain_magnitude(&self) -> bool {
        matches!(self, SignPolicy::RawBeta | SignPolicy::OddPower(_))
    }

    fn check_activation(&self, act: &Activation) -> Result<()> {
        if self.needs_gain_magnitude() && !act.is_differentiable() {
            return Err(Error::UnsupportedPolicy {
                policy: *self,
                activation: *act,
                reason: "the staircase gain is a Dirac delta; only its sign is usable",
            });
        }
        Ok(())
    }
}

/// Input-side factor `S` of the error matrix, same shape as `x_matrix`.
pub fn apply_sign_policy(
    policy: SignPolicy,
    x_matrix: &Matrix,
    act: &Activation,
) -> Result<Matrix> {
    policy.validate()?;
    policy.check_activation(act)?;
    let g = gain_sign(act);
    Ok(match policy {
        SignPolicy::SignOnly | SignPolicy::SignedDifference => x_matrix.map(|x| sgn(g * x)),
        SignPolicy::MagnitudeWeighted => x_matrix.map(|x| sgn(x) * x.abs()),
        SignPolicy::RawBeta => x_matrix.clone(),
        SignPolicy::OddPower(n) => x_matrix.map(|x| x.powi(n as i32)),
    })
}

/// Activation-side factor of `s`, one entry per output neuron and sample,
/// computed from the layer output `y_pred`. `None` means the factor is 1
/// everywhere.
pub fn output_gain(
    policy: SignPolicy,
    act: &Activation,
    y_pred: &Matrix,
) -> Result<Option<Matrix>> {
    policy.validate()?;
    policy.check_activation(act)?;
    if matches!(act, Activation::Identity) {
        return Ok(None);
    }
    Ok(match policy {
        SignPolicy::RawBeta => act.gain_from_output(y_pred),
        SignPolicy::OddPower(n) => act
            .gain_from_output(y_pred)
            .map(|g| g.map(|v| v.powi(n as i32))),
        _ => None,
    })
}

impl fmt::Display for SignPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignPolicy::SignOnly => write!(f, "sign"),
            SignPolicy::RawBeta => write!(f, "beta"),
            SignPolicy::OddPower(n) => write!(f, "odd-power:{n}"),
            SignPolicy::MagnitudeWeighted => write!(f, "magnitude"),
            SignPolicy::SignedDifference => write!(f, "signed-diff"),
        }
    }
}

impl FromStr for SignPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let policy = match s {
            "sign" => SignPolicy::SignOnly,
            "beta" => SignPolicy::RawBeta,
            "magnitude" => SignPolicy::MagnitudeWeighted,
            "signed-diff" => SignPolicy::SignedDifference,
            _ => match s.strip_prefix("odd-power:") {
                Some(n) => SignPolicy::OddPower(n.parse().map_err(|_| {
                    Error::InvalidConfig(format!("bad odd-power exponent in {s:?}"))
                })?),
                None => return Err(Error::InvalidConfig(format!(
                    "unknown policy {s:?} (expected sign|beta|odd-power:N|magnitude|signed-diff)"
                ))),
            },
        };
        policy.validate()?;
        Ok(policy)
    }
}
