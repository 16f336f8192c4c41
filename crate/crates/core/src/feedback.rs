//! Learning feedback: how confidently the last curriculum was labeled, and
//! how large the next curriculum may be.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GAMMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    /// Learning rate; larger values shrink curricula after uncertain rounds.
    pub gamma: f64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
        }
    }
}

impl FeedbackConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma.is_nan() || gamma <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Ok(Self { gamma })
    }
}

/// `exp[(gamma / s) sum_ij F_ij log_c F_ij]` over the `s` rows of the
/// round's curriculum; `0 log 0 = 0`.
pub fn feedback_value(rows: &DMatrix<f64>, gamma: f64) -> Result<f64> {
    let s = rows.nrows();
    let c = rows.ncols();
    if s == 0 {
        return Err(Error::InvalidArgument(
            "feedback needs at least one row".into(),
        ));
    }
    if c < 2 {
        return Err(Error::TooFewClasses { found: c });
    }
    let log_c = (c as f64).ln();
    let neg_entropy: f64 = rows
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln() / log_c)
        .sum();
    Ok((gamma / s as f64 * neg_entropy).exp().min(1.0))
}

/// `ceil(b * g)` for `g` in `(0, 1]`, so at least 1 whenever `b > 0`; an
/// underflowed `g` still counts as positive.
pub fn next_size(frontier: usize, feedback: f64) -> usize {
    if frontier == 0 {
        return 0;
    }
    let raw = (frontier as f64 * feedback).ceil();
    (raw.max(1.0) as usize).min(frontier)
}

/// First-round size: the feedback of uniform rows is `exp(-gamma)`.
pub fn initial_size(frontier: usize, gamma: f64) -> usize {
    next_size(frontier, (-gamma).exp())
}
