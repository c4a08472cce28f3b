use serde::{Deserialize, Serialize};

use crate::engine::mac::{MacTrace, Termination};
use crate::net::LayerKind;

/// Reduction telemetry of one MAC layer, summed over MACs (and images).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRunStats {
    pub layer: usize,
    pub kind: LayerKind,
    pub has_relu: bool,
    pub mac_count: u64,
    pub iterations_executed: u64,
    pub iterations_total: u64,
    /// MACs of ReLU layers whose full result is non-positive.
    pub negative_outputs: u64,
    /// Of those, MACs stopped by the ReLU bypass.
    pub negative_detected: u64,
    pub negative_iterations_executed: u64,
    pub negative_iterations_total: u64,
    /// Bypassed MACs whose full result was positive.
    pub false_bypass: u64,
    pub relu_bypass: u64,
    pub approx: u64,
    pub completed: u64,
}

impl LayerRunStats {
    pub fn new(layer: usize, kind: LayerKind, has_relu: bool) -> Self {
        LayerRunStats {
            layer,
            kind,
            has_relu,
            mac_count: 0,
            iterations_executed: 0,
            iterations_total: 0,
            negative_outputs: 0,
            negative_detected: 0,
            negative_iterations_executed: 0,
            negative_iterations_total: 0,
            false_bypass: 0,
            relu_bypass: 0,
            approx: 0,
            completed: 0,
        }
    }

    /// Account one MAC. `exact` is the full accumulator of the same MAC.
    pub fn record(&mut self, trace: &MacTrace, exact: i64) {
        let exec = trace.iterations_executed as u64;
        let total = trace.total_iterations as u64;
        self.mac_count += 1;
        self.iterations_executed += exec;
        self.iterations_total += total;
        match trace.termination {
            Termination::None => self.completed += 1,
            Termination::ReluBypass => self.relu_bypass += 1,
            Termination::Approx => self.approx += 1,
        }
        if self.has_relu && exact <= 0 {
            self.negative_outputs += 1;
            self.negative_iterations_executed += exec;
            self.negative_iterations_total += total;
            if trace.termination == Termination::ReluBypass {
                self.negative_detected += 1;
            }
        } else if trace.termination == Termination::ReluBypass {
            self.false_bypass += 1;
        }
    }

    pub fn merge(&mut self, other: &LayerRunStats) {
        debug_assert_eq!(self.layer, other.layer);
        self.mac_count += other.mac_count;
        self.iterations_executed += other.iterations_executed;
        self.iterations_total += other.iterations_total;
        self.negative_outputs += other.negative_outputs;
        self.negative_detected += other.negative_detected;
        self.negative_iterations_executed += other.negative_iterations_executed;
        self.negative_iterations_total += other.negative_iterations_total;
        self.false_bypass += other.false_bypass;
        self.relu_bypass += other.relu_bypass;
        self.approx += other.approx;
        self.completed += other.completed;
    }

    pub fn reduction(&self) -> f64 {
        ratio_complement(self.iterations_executed, self.iterations_total)
    }
}

fn ratio_complement(executed: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        1.0 - executed as f64 / total as f64
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Sum per-layer stats of another run (same model) into `acc`.
pub fn merge_runs(acc: &mut Vec<LayerRunStats>, run: &[LayerRunStats]) {
    if acc.is_empty() {
        acc.extend(run.iter().cloned());
        return;
    }
    for (a, b) in acc.iter_mut().zip(run) {
        a.merge(b);
    }
}

/// Headline reduction metrics over CONV layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    /// `1 - executed / total` iterations.
    pub reduction_overall: f64,
    /// Same, restricted to MACs with non-positive results on ReLU layers.
    pub reduction_negative_outputs: f64,
    /// Bypassed negatives over all negatives.
    pub detection_rate: f64,
    /// Share of all iterations that belong to negative-output MACs.
    pub negative_share: f64,
    pub false_bypass_rate: f64,
    pub mac_count: u64,
    pub iterations_executed: u64,
    pub iterations_total: u64,
}

pub fn reduction_report(stats: &[LayerRunStats]) -> ReductionReport {
    let conv = stats.iter().filter(|s| s.kind == LayerKind::Conv);
    let mut t = LayerRunStats::new(0, LayerKind::Conv, true);
    for s in conv {
        t.mac_count += s.mac_count;
        t.iterations_executed += s.iterations_executed;
        t.iterations_total += s.iterations_total;
        t.negative_outputs += s.negative_outputs;
        t.negative_detected += s.negative_detected;
        t.negative_iterations_executed += s.negative_iterations_executed;
        t.negative_iterations_total += s.negative_iterations_total;
        t.false_bypass += s.false_bypass;
    }
    let positives = t.mac_count - t.negative_outputs;
    ReductionReport {
        reduction_overall: t.reduction(),
        reduction_negative_outputs: ratio_complement(
            t.negative_iterations_executed,
            t.negative_iterations_total,
        ),
        detection_rate: ratio(t.negative_detected, t.negative_outputs),
        negative_share: ratio(t.negative_iterations_total, t.iterations_total),
        false_bypass_rate: ratio(t.false_bypass, positives),
        mac_count: t.mac_count,
        iterations_executed: t.iterations_executed,
        iterations_total: t.iterations_total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(exec: usize, term: Termination) -> MacTrace {
        MacTrace {
            iterations_executed: exec,
            total_iterations: 8,
            termination: term,
            final_accu: 0,
        }
    }

    #[test]
    fn no_termination_reports_zero() {
        let mut s = LayerRunStats::new(0, LayerKind::Conv, true);
        for _ in 0..10 {
            s.record(&trace(8, Termination::None), 5);
        }
        let r = reduction_report(&[s]);
        assert_eq!(r.reduction_overall, 0.0);
        assert_eq!(r.detection_rate, 0.0);
    }

    #[test]
    fn counts_negatives_and_detection() {
        let mut s = LayerRunStats::new(0, LayerKind::Conv, true);
        s.record(&trace(2, Termination::ReluBypass), -5);
        s.record(&trace(8, Termination::None), -1);
        s.record(&trace(8, Termination::None), 10);
        s.record(&trace(4, Termination::ReluBypass), 3);
        assert_eq!(s.negative_outputs, 2);
        assert_eq!(s.negative_detected, 1);
        assert_eq!(s.false_bypass, 1);
        let r = reduction_report(&[s.clone()]);
        assert!((r.reduction_overall - (1.0 - 22.0 / 32.0)).abs() < 1e-12);
        assert!((r.reduction_negative_outputs - (1.0 - 10.0 / 16.0)).abs() < 1e-12);
        assert_eq!(r.detection_rate, 0.5);
        assert_eq!(r.negative_share, 0.5);
        // FC layers are ignored by the headline figure
        let mut fc = LayerRunStats::new(1, LayerKind::Fc, false);
        fc.record(&trace(8, Termination::None), 1);
        assert_eq!(reduction_report(&[s, fc]).iterations_total, 32);
    }
}
