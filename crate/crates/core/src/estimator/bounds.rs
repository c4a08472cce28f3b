use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::probs::PositionProbs;

/// How the bounds on the remaining partial results are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsMode {
    /// Every remaining product as large as possible.
    WorstCase,
    /// Digit probabilities from calibration statistics.
    Statistical,
    /// Exact remaining sum; only meaningful for ideal-performance runs.
    Oracle,
}

impl BoundsMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundsMode::WorstCase => "worst_case",
            BoundsMode::Statistical => "statistical",
            BoundsMode::Oracle => "oracle",
        }
    }
}

/// Sums of the positive and negative weights of one kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct KernelSums {
    pub pos: i64,
    /// Sum of the negative weights (non-positive).
    pub neg: i64,
}

impl KernelSums {
    pub fn of(kernel: &[i32]) -> Self {
        kernel.iter().fold(KernelSums::default(), |mut s, &w| {
            if w > 0 {
                s.pos += w as i64;
            } else {
                s.neg += w as i64;
            }
            s
        })
    }

    pub fn abs(&self) -> i64 {
        self.pos - self.neg
    }
}

/// Round away from zero, snapping values within float noise of an integer.
pub(crate) fn round_away(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        return r as i64;
    }
    if x >= 0.0 {
        x.ceil() as i64
    } else {
        x.floor() as i64
    }
}

/// Bounds `(max_i, min_i)` of the partial result produced at bit position
/// `position`.
pub fn per_iteration_bounds(
    sums: KernelSums,
    probs: Option<&PositionProbs>,
    position: u32,
    mode: BoundsMode,
    nonnegative_inputs: bool,
) -> Result<(i64, i64)> {
    let scale = 1i64 << position;
    match mode {
        BoundsMode::WorstCase => {
            if nonnegative_inputs {
                Ok((sums.pos * scale, sums.neg * scale))
            } else {
                Ok((sums.abs() * scale, -sums.abs() * scale))
            }
        }
        BoundsMode::Statistical => {
            let p = probs.ok_or_else(|| {
                Error::InvalidPolicy("statistical bounds need bit probabilities".into())
            })?;
            let wp = sums.pos as f64;
            let wn = sums.neg as f64;
            let max_pos = wp * p.plus.max + wn.abs() * p.minus.max;
            let max_neg = -wp * p.minus.min + wn * p.plus.min;
            let min_pos = wp * p.plus.min + wn.abs() * p.minus.min;
            let min_neg = -wp * p.minus.max + wn * p.plus.max;
            let s = scale as f64;
            Ok((
                round_away((max_pos + max_neg) * s),
                round_away((min_pos + min_neg) * s),
            ))
        }
        BoundsMode::Oracle => Err(Error::InvalidPolicy(
            "oracle bounds are computed per MAC at run time".into(),
        )),
    }
}
