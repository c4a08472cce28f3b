//! One bit-serial MAC, MSB first, with the two early-termination checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{BoundsMode, LutRow};
use crate::fixed::{digit_unchecked, WideAcc};

/// Which termination rules are armed and how Max/Min are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminationPolicy {
    pub relu_bypass: bool,
    pub approx: bool,
    pub threshold: f64,
    pub bounds: BoundsMode,
    /// Also apply the approximation rule to FC layers.
    #[serde(default)]
    pub approx_fc: bool,
}

impl TerminationPolicy {
    pub fn exact() -> Self {
        TerminationPolicy {
            relu_bypass: false,
            approx: false,
            threshold: 0.0,
            bounds: BoundsMode::WorstCase,
            approx_fc: false,
        }
    }

    pub fn relu(bounds: BoundsMode) -> Self {
        TerminationPolicy {
            relu_bypass: true,
            bounds,
            ..Self::exact()
        }
    }

    pub fn approx(threshold: f64, bounds: BoundsMode) -> Self {
        TerminationPolicy {
            approx: true,
            threshold,
            bounds,
            ..Self::exact()
        }
    }

    pub fn combined(threshold: f64, bounds: BoundsMode) -> Self {
        TerminationPolicy {
            relu_bypass: true,
            approx: true,
            threshold,
            bounds,
            approx_fc: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() || self.threshold < 0.0 {
            return Err(Error::InvalidPolicy(format!(
                "threshold must be a finite non-negative number, got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn any_armed(&self) -> bool {
        self.relu_bypass || self.approx
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    None,
    ReluBypass,
    Approx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MacTrace {
    pub iterations_executed: usize,
    pub total_iterations: usize,
    pub termination: Termination,
    /// Accumulator when the MAC stopped.
    pub final_accu: WideAcc,
}

/// Unscaled partial result of every bit position: `sum_j digit_i(a_j) * w_j`.
pub fn partial_results(activations: &[i32], weights: &[i32], bits: usize) -> Result<Vec<WideAcc>> {
    if activations.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: activations.len(),
            right: weights.len(),
        });
    }
    let mut partials = vec![0i64; bits];
    for (&a, &w) in activations.iter().zip(weights) {
        for (i, p) in partials.iter_mut().enumerate() {
            *p += digit_unchecked(a as i64, i as u32) as i64 * w as i64;
        }
    }
    Ok(partials)
}

/// Exact sum of the partial results still outstanding after iteration `t`.
pub fn oracle_remaining(
    activations: &[i32],
    weights: &[i32],
    t: usize,
    bits: usize,
) -> Result<WideAcc> {
    if t == 0 || t >= bits {
        return Err(Error::InvalidPolicy(format!(
            "iteration {t} outside the check window 1..{}",
            bits - 1
        )));
    }
    let partials = partial_results(activations, weights, bits)?;
    Ok(remaining_after(&partials, t))
}

fn remaining_after(partials: &[WideAcc], t: usize) -> WideAcc {
    let n = partials.len();
    (0..n - t).map(|i| partials[i] << i).sum()
}

/// Source of the Max/Min values checked after each iteration.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Estimate<'a> {
    Table(&'a LutRow),
    Oracle,
    Unused,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Checks {
    pub relu_bypass: bool,
    pub approx: bool,
    pub threshold: f64,
}

/// Core loop over precomputed partials (indexed by bit position).
pub(crate) fn run_partials(
    partials: &[WideAcc],
    bias: WideAcc,
    estimate: Estimate<'_>,
    checks: Checks,
) -> MacTrace {
    let n = partials.len();
    let mut accu = bias;
    let oracle_low: Option<Vec<WideAcc>> = match estimate {
        Estimate::Oracle => {
            let mut low = vec![0i64; n + 1];
            for i in 0..n {
                low[i + 1] = low[i] + (partials[i] << i);
            }
            Some(low)
        }
        _ => None,
    };
    for t in 1..=n {
        let pos = n - t;
        accu += partials[pos] << pos;
        if t == n || !(checks.relu_bypass || checks.approx) {
            continue;
        }
        let (max, min) = match estimate {
            Estimate::Table(row) => (row.max[t - 1], row.min[t - 1]),
            Estimate::Oracle => {
                let r = oracle_low.as_ref().expect("oracle prefix")[n - t];
                (r, r)
            }
            Estimate::Unused => continue,
        };
        if checks.relu_bypass && accu + max <= 0 {
            return MacTrace {
                iterations_executed: t,
                total_iterations: n,
                termination: Termination::ReluBypass,
                final_accu: accu,
            };
        }
        if checks.approx {
            let allowed = accu.unsigned_abs() as f64 * checks.threshold;
            if max.unsigned_abs() as f64 <= allowed && min.unsigned_abs() as f64 <= allowed {
                return MacTrace {
                    iterations_executed: t,
                    total_iterations: n,
                    termination: Termination::Approx,
                    final_accu: accu,
                };
            }
        }
    }
    MacTrace {
        iterations_executed: n,
        total_iterations: n,
        termination: Termination::None,
        final_accu: accu,
    }
}

/// Run one MAC bit-serially. `lut_row` must hold `bits - 1` entries unless
/// the policy uses oracle bounds or arms no rule.
pub fn mac_bitserial(
    activations: &[i32],
    weights: &[i32],
    lut_row: Option<&LutRow>,
    policy: &TerminationPolicy,
    bias: WideAcc,
    has_relu: bool,
    bits: usize,
) -> Result<MacTrace> {
    policy.validate()?;
    let partials = partial_results(activations, weights, bits)?;
    let checks = Checks {
        relu_bypass: policy.relu_bypass && has_relu,
        approx: policy.approx,
        threshold: policy.threshold,
    };
    let estimate = if !(checks.relu_bypass || checks.approx) {
        Estimate::Unused
    } else if policy.bounds == BoundsMode::Oracle {
        Estimate::Oracle
    } else {
        let row = lut_row.ok_or(Error::MissingLut(0))?;
        if row.max.len() != bits - 1 || row.min.len() != bits - 1 {
            return Err(Error::LutRowLength {
                expected: bits - 1,
                got: row.max.len().min(row.min.len()),
            });
        }
        Estimate::Table(row)
    };
    Ok(run_partials(&partials, bias, estimate, checks))
}

/// Accumulator trajectory after each iteration with no termination.
pub fn accu_trajectory(
    activations: &[i32],
    weights: &[i32],
    bias: WideAcc,
    bits: usize,
) -> Result<Vec<WideAcc>> {
    let partials = partial_results(activations, weights, bits)?;
    let mut accu = bias;
    Ok((1..=bits)
        .map(|t| {
            accu += partials[bits - t] << (bits - t);
            accu
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{lut_row, KernelSums};
    use crate::fixed::dot_exact;

    const A: [i32; 3] = [4, 12, 10];
    const W: [i32; 3] = [4, -8, -5];

    fn worst_row() -> LutRow {
        lut_row(KernelSums::of(&W), None, 4, BoundsMode::WorstCase, true).unwrap()
    }

    #[test]
    fn figure_two_trajectory() {
        assert_eq!(
            accu_trajectory(&A, &W, 0, 4).unwrap(),
            vec![-104, -120, -130, -130]
        );
        let t = mac_bitserial(&A, &W, None, &TerminationPolicy::exact(), 0, true, 4).unwrap();
        assert_eq!(t.termination, Termination::None);
        assert_eq!(t.iterations_executed, 4);
        assert_eq!(t.final_accu, -130);
    }

    #[test]
    fn figure_two_approx() {
        let row = worst_row();
        assert_eq!((row.max[1], row.min[1]), (12, -39));
        let t = mac_bitserial(
            &A,
            &W,
            Some(&row),
            &TerminationPolicy::approx(0.5, BoundsMode::WorstCase),
            0,
            true,
            4,
        )
        .unwrap();
        assert_eq!(t.termination, Termination::Approx);
        assert_eq!(t.iterations_executed, 2);
        assert_eq!(t.final_accu, -120);
    }

    #[test]
    fn figure_two_relu_bypass() {
        // worst-case Max_1 = 28 already proves the sign: -104 + 28 <= 0
        let row = worst_row();
        let p = TerminationPolicy::relu(BoundsMode::WorstCase);
        let t = mac_bitserial(&A, &W, Some(&row), &p, 0, true, 4).unwrap();
        assert_eq!(t.termination, Termination::ReluBypass);
        assert_eq!(t.iterations_executed, 1);
        // a looser first entry defers the decision to iteration 2 (-120 + 51 <= 0)
        let loose = LutRow {
            max: vec![120, 51, 4],
            min: vec![-91, -39, -13],
        };
        let t = mac_bitserial(&A, &W, Some(&loose), &p, 0, true, 4).unwrap();
        assert_eq!(t.termination, Termination::ReluBypass);
        assert_eq!(t.iterations_executed, 2);
        // no ReLU on the layer: rule disarmed
        let t = mac_bitserial(&A, &W, Some(&row), &p, 0, false, 4).unwrap();
        assert_eq!(t.termination, Termination::None);
    }

    #[test]
    fn bias_participates() {
        let row = worst_row();
        let p = TerminationPolicy::relu(BoundsMode::WorstCase);
        let t = mac_bitserial(&A, &W, Some(&row), &p, 200, true, 4).unwrap();
        assert_eq!(t.termination, Termination::None);
        assert_eq!(t.final_accu, 70);
    }

    #[test]
    fn oracle_remaining_examples() {
        assert_eq!(oracle_remaining(&A, &W, 2, 4).unwrap(), -10);
        assert_eq!(oracle_remaining(&[2, 4], &[3, 3], 3, 4).unwrap(), 0);
        let traj = accu_trajectory(&A, &W, 0, 4).unwrap();
        let exact = dot_exact(&A, &W).unwrap();
        for t in 1..4 {
            assert_eq!(traj[t - 1] + oracle_remaining(&A, &W, t, 4).unwrap(), exact);
        }
        assert!(oracle_remaining(&A, &W, 0, 4).is_err());
        assert!(oracle_remaining(&A, &W, 4, 4).is_err());
    }

    #[test]
    fn lut_row_length_checked() {
        let bad = LutRow {
            max: vec![1, 1],
            min: vec![0, 0],
        };
        let r = mac_bitserial(
            &A,
            &W,
            Some(&bad),
            &TerminationPolicy::relu(BoundsMode::WorstCase),
            0,
            true,
            4,
        );
        assert!(matches!(
            r,
            Err(Error::LutRowLength {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn negative_threshold_rejected() {
        let p = TerminationPolicy::approx(-0.1, BoundsMode::Oracle);
        assert!(mac_bitserial(&A, &W, None, &p, 0, true, 4).is_err());
    }

    #[test]
    fn exhaustive_small_equivalence() {
        // every 4-bit unsigned/signed activation vector up to length 3
        let w_sets: [&[i32]; 4] = [&[5], &[-3, 7], &[1, -8, 6], &[-7, -7, 7]];
        for w in w_sets {
            let k = w.len();
            for signed in [false, true] {
                let (lo, hi) = if signed { (-7, 7) } else { (0, 15) };
                let count = ((hi - lo + 1) as usize).pow(k as u32);
                for idx in 0..count {
                    let mut rest = idx;
                    let a: Vec<i32> = (0..k)
                        .map(|_| {
                            let v = lo + (rest % (hi - lo + 1) as usize) as i32;
                            rest /= (hi - lo + 1) as usize;
                            v
                        })
                        .collect();
                    let t = mac_bitserial(&a, w, None, &TerminationPolicy::exact(), 0, true, 4)
                        .unwrap();
                    assert_eq!(t.final_accu, dot_exact(&a, w).unwrap());
                }
            }
        }
    }
}
