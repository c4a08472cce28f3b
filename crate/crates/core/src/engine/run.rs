//! Network-level inference with bit-serial MACs and early termination.

use serde::{Deserialize, Serialize};

use crate::engine::mac::{run_partials, Checks, Estimate, TerminationPolicy};
use crate::engine::stats::LayerRunStats;
use crate::error::{Error, Result};
use crate::estimator::{BoundsMode, EstimateLut, LayerLut};
use crate::fixed::QTensor;
use crate::net::infer::{finish_output, forward};
use crate::net::{Layer, LayerKind, NetworkModel};

/// Iterations executed by every MAC of one layer, position-major
/// (`executed[pos * channels + ch]`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub layer: usize,
    pub positions: usize,
    pub channels: usize,
    pub total_iterations: u8,
    pub executed: Vec<u8>,
}

impl LayerTrace {
    /// Trace of a run without any termination.
    pub fn full(layer: usize, positions: usize, channels: usize, iterations: u8) -> Self {
        LayerTrace {
            layer,
            positions,
            channels,
            total_iterations: iterations,
            executed: vec![iterations; positions * channels],
        }
    }

    pub fn at(&self, pos: usize) -> &[u8] {
        &self.executed[pos * self.channels..(pos + 1) * self.channels]
    }

    pub fn iterations_executed(&self) -> u64 {
        self.executed.iter().map(|&e| e as u64).sum()
    }

    pub fn iterations_total(&self) -> u64 {
        self.executed.len() as u64 * self.total_iterations as u64
    }
}

/// Traces of a baseline (no termination) run of `model`.
pub fn baseline_traces(model: &NetworkModel) -> Vec<LayerTrace> {
    model
        .mac_layers()
        .map(|i| {
            let d = &model.layers[i].desc;
            LayerTrace::full(i, d.positions(), d.out_channels(), d.input_spec.bits)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedOutput {
    pub logits: Vec<i32>,
    pub activations: Vec<QTensor>,
    /// One entry per MAC layer, in layer order.
    pub stats: Vec<LayerRunStats>,
    pub traces: Vec<LayerTrace>,
}

struct PreparedLayer<'a> {
    /// Weights transposed to `[row][channel]`.
    columns: Vec<i32>,
    checks: Checks,
    table: Option<&'a LayerLut>,
    oracle: bool,
}

/// Reusable executor for one model, policy and estimate table.
pub struct ReducedRunner<'a> {
    model: &'a NetworkModel,
    prepared: Vec<Option<PreparedLayer<'a>>>,
}

impl<'a> ReducedRunner<'a> {
    pub fn new(
        model: &'a NetworkModel,
        policy: &TerminationPolicy,
        lut: Option<&'a EstimateLut>,
    ) -> Result<Self> {
        policy.validate()?;
        let mut prepared = Vec::with_capacity(model.layers.len());
        for (i, layer) in model.layers.iter().enumerate() {
            let d = &layer.desc;
            if !d.kind.is_mac() {
                prepared.push(None);
                continue;
            }
            let checks = Checks {
                relu_bypass: policy.relu_bypass && d.has_relu,
                approx: policy.approx && (d.kind == LayerKind::Conv || policy.approx_fc),
                threshold: policy.threshold,
            };
            let armed = checks.relu_bypass || checks.approx;
            let oracle = armed && policy.bounds == BoundsMode::Oracle;
            let table = if armed && !oracle {
                let lut = lut.ok_or(Error::MissingLut(i))?;
                if lut.mode != policy.bounds {
                    return Err(Error::InvalidPolicy(format!(
                        "policy asks for {} bounds but the table holds {}",
                        policy.bounds.as_str(),
                        lut.mode.as_str()
                    )));
                }
                let t = lut.for_layer(i).ok_or(Error::MissingLut(i))?;
                if t.channels.len() != d.out_channels() {
                    return Err(Error::ShapeMismatch {
                        context: format!("estimate table of layer {i}"),
                        expected: vec![d.out_channels()],
                        got: vec![t.channels.len()],
                    });
                }
                let n = d.input_spec.iterations();
                if let Some(bad) = t
                    .channels
                    .iter()
                    .find(|r| r.max.len() != n - 1 || r.min.len() != n - 1)
                {
                    return Err(Error::LutRowLength {
                        expected: n - 1,
                        got: bad.max.len().min(bad.min.len()),
                    });
                }
                Some(t)
            } else {
                None
            };
            prepared.push(Some(PreparedLayer {
                columns: transpose(layer),
                checks,
                table,
                oracle,
            }));
        }
        Ok(ReducedRunner { model, prepared })
    }

    pub fn infer(&self, input: &QTensor) -> Result<ReducedOutput> {
        let mut stats = Vec::new();
        let mut traces = Vec::new();
        let activations = forward(self.model, input, |i, layer, x| {
            let prep = self.prepared[i].as_ref().expect("mac layer prepared");
            let (y, s, t) = self.mac_layer(i, layer, prep, x);
            stats.push(s);
            traces.push(t);
            Ok(y)
        })?;
        Ok(ReducedOutput {
            logits: activations.last().expect("non-empty").data().to_vec(),
            activations,
            stats,
            traces,
        })
    }

    fn mac_layer(
        &self,
        index: usize,
        layer: &Layer,
        prep: &PreparedLayer<'_>,
        input: &QTensor,
    ) -> (QTensor, LayerRunStats, LayerTrace) {
        let d = &layer.desc;
        let [z, oh, ow] = d.output_shape;
        let n = d.input_spec.iterations();
        let mut stats = LayerRunStats::new(index, d.kind, d.has_relu);
        let mut trace = LayerTrace::full(index, oh * ow, z, n as u8);
        let mut out = vec![0i32; z * oh * ow];
        let mut window = Vec::with_capacity(d.kernel_len());
        let mut partials = vec![0i64; n * z];
        let mut column = [0i64; 16];

        for oy in 0..oh {
            for ox in 0..ow {
                let pos = oy * ow + ox;
                d.gather_window(input.data(), oy, ox, &mut window);
                partials.iter_mut().for_each(|p| *p = 0);
                for (j, &a) in window.iter().enumerate() {
                    if a == 0 {
                        continue;
                    }
                    let row = &prep.columns[j * z..(j + 1) * z];
                    let mut mag = a.unsigned_abs();
                    while mag != 0 {
                        let bit = mag.trailing_zeros() as usize;
                        mag &= mag - 1;
                        let dst = &mut partials[bit * z..(bit + 1) * z];
                        if a > 0 {
                            dst.iter_mut().zip(row).for_each(|(p, &w)| *p += w as i64);
                        } else {
                            dst.iter_mut().zip(row).for_each(|(p, &w)| *p -= w as i64);
                        }
                    }
                }
                for ch in 0..z {
                    let bias = layer.bias_of(ch);
                    let mut exact = bias;
                    for (i, c) in column.iter_mut().enumerate().take(n) {
                        *c = partials[i * z + ch];
                        exact += *c << i;
                    }
                    let estimate = if prep.oracle {
                        Estimate::Oracle
                    } else if let Some(t) = prep.table {
                        Estimate::Table(&t.channels[ch])
                    } else {
                        Estimate::Unused
                    };
                    let mt = run_partials(&column[..n], bias, estimate, prep.checks);
                    stats.record(&mt, exact);
                    trace.executed[pos * z + ch] = mt.iterations_executed as u8;
                    out[(ch * oh + oy) * ow + ox] = match mt.termination {
                        crate::engine::Termination::ReluBypass => 0,
                        _ => finish_output(layer, mt.final_accu),
                    };
                }
            }
        }
        (
            QTensor::from_parts(d.output_shape.to_vec(), d.output_spec, out),
            stats,
            trace,
        )
    }
}

fn transpose(layer: &Layer) -> Vec<i32> {
    let z = layer.desc.out_channels();
    let k = layer.desc.kernel_len();
    let mut cols = vec![0i32; k * z];
    for ch in 0..z {
        for (j, &w) in layer.kernel(ch).iter().enumerate() {
            cols[j * z + ch] = w;
        }
    }
    cols
}

/// Bit-serial inference of one image under `policy`.
pub fn infer_reduced(
    model: &NetworkModel,
    input: &QTensor,
    policy: &TerminationPolicy,
    lut: Option<&EstimateLut>,
) -> Result<ReducedOutput> {
    ReducedRunner::new(model, policy, lut)?.infer(input)
}
