//! Synthetic traces with a prescribed iteration reduction, for projecting
//! hardware gains without running inference.

use crate::engine::{baseline_traces, LayerTrace};
use crate::error::{Error, Result};
use crate::net::{LayerKind, NetworkModel};

/// Traces in which CONV MACs execute `1 - reduction` of their iterations,
/// spread evenly over MACs (each runs at least one). FC layers stay full.
pub fn inject_reduction(model: &NetworkModel, reduction: f64) -> Result<Vec<LayerTrace>> {
    if !(0.0..1.0).contains(&reduction) {
        return Err(Error::InvalidConfig(format!(
            "reduction {reduction} outside [0, 1)"
        )));
    }
    let mut traces = baseline_traces(model);
    for t in traces.iter_mut() {
        if model.layers[t.layer].desc.kind != LayerKind::Conv {
            continue;
        }
        let macs = t.executed.len() as u64;
        let n = t.total_iterations as u64;
        let target = (((1.0 - reduction) * (macs * n) as f64).round() as u64).clamp(macs, macs * n);
        for (i, e) in t.executed.iter_mut().enumerate() {
            let i = i as u64;
            *e = ((i + 1) * target / macs - i * target / macs) as u8;
        }
    }
    Ok(traces)
}
