use std::fmt;
use std::str::FromStr;

use super::Matrix;
use crate::error::{Error, Result};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// The signum convention used throughout: zero (of either sign) maps to +1.
#[inline]
pub fn sgn(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Elementwise [`sgn`].
pub fn sgn_matrix(m: &Matrix) -> Matrix {
    m.map(sgn)
}

/// Output nonlinearity of a layer. Every variant is monotone
/// non-decreasing, so its gain is never negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Tanh,
    /// Normalized exponentials over each column (one column per sample).
    Softmax,
    LeakyRelu {
        slope: f64,
    },
    /// `step_height * floor(z / step_width)`; flat between jumps.
    Staircase {
        step_width: f64,
        step_height: f64,
    },
}

impl Activation {
    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn unit_staircase() -> Self {
        Activation::Staircase {
            step_width: 1.0,
            step_height: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::LeakyRelu { slope } if !(slope > 0.0 && slope.is_finite()) => Err(
                Error::InvalidConfig(format!("leaky-relu slope must be positive, got {slope}")),
            ),
            Activation::Staircase {
                step_width,
                step_height,
            } if !(step_width > 0.0
                && step_height > 0.0
                && step_width.is_finite()
                && step_height.is_finite()) =>
            {
                Err(Error::InvalidConfig(format!(
                    "staircase step width and height must be positive, got {step_width}:{step_height}"
                )))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    fn scalar(&self, z: f64) -> f64 {
        match *self {
            Activation::Identity | Activation::Softmax => z,
            Activation::Tanh => z.tanh(),
            Activation::LeakyRelu { slope } => {
                if z >= 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Staircase {
                step_width,
                step_height,
            } => step_height * (z / step_width).floor(),
        }
    }

    /// Applies the activation to a scalar. Softmax has no scalar form and
    /// is treated as the identity here.
    pub fn apply_scalar(&self, z: f64) -> f64 {
        self.scalar(z)
    }

    /// Whether the activation has a usable derivative almost everywhere.
    pub fn is_differentiable(&self) -> bool {
        !matches!(self, Activation::Staircase { .. })
    }

    /// Magnitude of the activation gain `dσ/dz` at each entry, recovered
    /// from the activation output `y = σ(z)`.
    ///
    /// Softmax reports the diagonal of its Jacobian. Staircase returns
    /// `None`: its gain is a train of Dirac deltas whose magnitude is
    /// undefined, only the sign is.
    pub fn gain_from_output(&self, y: &Matrix) -> Option<Matrix> {
        match *self {
            Activation::Identity => Some(Matrix::filled(y.rows(), y.cols(), 1.0)),
            Activation::Tanh => Some(y.map(|v| 1.0 - v * v)),
            Activation::Softmax => Some(y.map(|v| v * (1.0 - v))),
            Activation::LeakyRelu { slope } => Some(y.map(|v| if v < 0.0 { slope } else { 1.0 })),
            Activation::Staircase { .. } => None,
        }
    }
}

/// Applies `act` to a pre-activation block. Softmax normalizes each column.
pub fn apply_activation(act: &Activation, z: &Matrix) -> Matrix {
    match act {
        Activation::Softmax => softmax_columns(z),
        other => z.map(|v| other.scalar(v)),
    }
}

fn softmax_columns(z: &Matrix) -> Matrix {
    let (rows, cols) = z.shape();
    let mut out = Matrix::zeros(rows, cols);
    for c in 0..cols {
        let max = (0..rows).fold(f64::NEG_INFINITY, |m, r| m.max(z[(r, c)]));
        let mut total = 0.0;
        for r in 0..rows {
            let e = (z[(r, c)] - max).exp();
            out[(r, c)] = e;
            total += e;
        }
        for r in 0..rows {
            out[(r, c)] /= total;
        }
    }
    out
}

/// Sign of the activation gain. All supported activations are monotone
/// non-decreasing and a zero gain counts as +1, so this is always +1 and
/// `sgn(σᵍ·x)` reduces to `sgn(x)`.
pub fn gain_sign(_act: &Activation) -> f64 {
    1.0
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Identity => write!(f, "identity"),
            Activation::Tanh => write!(f, "tanh"),
            Activation::Softmax => write!(f, "softmax"),
            Activation::LeakyRelu { slope } => write!(f, "leaky-relu:{slope}"),
            Activation::Staircase {
                step_width,
                step_height,
            } => write!(f, "staircase:{step_width}:{step_height}"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let head = parts.next().unwrap_or_default().to_ascii_lowercase();
        let params = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| {
                    Error::InvalidConfig(format!("bad activation parameter {p:?} in {s:?}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let act = match (head.as_str(), params.as_slice()) {
            ("identity", []) => Activation::Identity,
            ("tanh", []) => Activation::Tanh,
            ("softmax", []) => Activation::Softmax,
            ("leaky-relu", []) => Activation::leaky_relu(),
            ("leaky-relu", [slope]) => Activation::LeakyRelu { slope: *slope },
            ("staircase", []) => Activation::unit_staircase(),
            ("staircase", [w, h]) => Activation::Staircase {
                step_width: *w,
                step_height: *h,
            },
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown activation {s:?} (expected identity|tanh|softmax|leaky-relu[:SLOPE]|staircase[:W:H])"
                )))
            }
        };
        act.validate()?;
        Ok(act)
    }
}
