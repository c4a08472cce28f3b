//! Event counting, latency, energy and area of one mapped network.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::LayerTrace;
use crate::error::{Error, Result};
use crate::hwmodel::config::{HwConfig, LeakageScope};
use crate::hwmodel::mapping::{LayerMapping, MappingPlan};
use crate::net::NetworkModel;

/// Activity of one layer for one frame. Fractional fields count bus-width
/// accesses; all fields are additive across frames.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerEvents {
    pub layer: usize,
    pub slot_ns: f64,
    /// Sum over positions and iterations of the busiest channel group.
    pub iteration_slots: f64,
    pub channel_iterations: f64,
    /// `channel_iterations` times row groups.
    pub ipu_channel_iterations: f64,
    pub input_memory_reads: f64,
    pub input_bus_transfers: f64,
    pub input_buffer_writes: f64,
    pub input_buffer_reads: f64,
    pub output_buffer_writes: f64,
    pub output_bus_transfers: f64,
    pub output_memory_writes: f64,
    /// Termination checks (one per iteration boundary reached).
    pub checks: f64,
    /// Executed iterations weighted by IMAs spanned by the channel's group.
    pub ima_iterations: f64,
}

impl LayerEvents {
    pub fn latency_ns(&self) -> f64 {
        self.iteration_slots * self.slot_ns
    }

    fn add(&mut self, o: &LayerEvents) {
        self.iteration_slots += o.iteration_slots;
        self.channel_iterations += o.channel_iterations;
        self.ipu_channel_iterations += o.ipu_channel_iterations;
        self.input_memory_reads += o.input_memory_reads;
        self.input_bus_transfers += o.input_bus_transfers;
        self.input_buffer_writes += o.input_buffer_writes;
        self.input_buffer_reads += o.input_buffer_reads;
        self.output_buffer_writes += o.output_buffer_writes;
        self.output_bus_transfers += o.output_bus_transfers;
        self.output_memory_writes += o.output_memory_writes;
        self.checks += o.checks;
        self.ima_iterations += o.ima_iterations;
    }

    fn scale(&mut self, k: f64) {
        self.iteration_slots *= k;
        self.channel_iterations *= k;
        self.ipu_channel_iterations *= k;
        self.input_memory_reads *= k;
        self.input_bus_transfers *= k;
        self.input_buffer_writes *= k;
        self.input_buffer_reads *= k;
        self.output_buffer_writes *= k;
        self.output_bus_transfers *= k;
        self.output_memory_writes *= k;
        self.checks *= k;
        self.ima_iterations *= k;
    }
}

fn layer_events(trace: &LayerTrace, map: &LayerMapping, config: &HwConfig) -> Result<LayerEvents> {
    if trace.channels != map.channels || trace.positions != map.positions {
        return Err(Error::ShapeMismatch {
            context: format!("trace of layer {}", trace.layer),
            expected: vec![map.positions, map.channels],
            got: vec![trace.positions, trace.channels],
        });
    }
    let n = trace.total_iterations as usize;
    let cpi = map.channels_per_ipu;
    let mut counts = vec![0u32; n + 1];
    let mut ev = LayerEvents {
        layer: trace.layer,
        slot_ns: config.channel_slot_ns(map.weight_bits),
        ..LayerEvents::default()
    };
    let mut busiest = vec![0u32; n + 1];
    let mut group_active = 0u64;
    let mut executed = 0u64;
    let mut checks = 0u64;
    let mut ima_iters = 0u64;

    for pos in 0..trace.positions {
        let row = trace.at(pos);
        busiest.iter_mut().for_each(|b| *b = 0);
        for (g, chunk) in row.chunks(cpi).enumerate() {
            counts.iter_mut().for_each(|c| *c = 0);
            let mut sum = 0u64;
            for &e in chunk {
                let e = e as usize;
                if e > n {
                    return Err(Error::ValueOutOfRange {
                        value: e as i64,
                        min: 0,
                        max: n as i64,
                    });
                }
                counts[e] += 1;
                sum += e as u64;
                checks += e.min(n.saturating_sub(1)) as u64;
            }
            executed += sum;
            ima_iters += sum * map.imas_per_group[g] as u64;
            let mut live = 0u32;
            for t in (1..=n).rev() {
                live += counts[t];
                busiest[t] = busiest[t].max(live);
                if live > 0 {
                    group_active += 1;
                }
            }
        }
        ev.iteration_slots += busiest[1..].iter().map(|&b| b as f64).sum::<f64>();
    }

    let positions = trace.positions as f64;
    let outputs = (trace.positions * trace.channels) as f64;
    let window_bits = (map.rows * map.act_bits as usize) as f64;
    let in_words = window_bits / config.input_memory.bus_bits as f64;
    ev.channel_iterations = executed as f64;
    ev.ipu_channel_iterations = (executed * map.row_groups as u64) as f64;
    ev.input_memory_reads = positions * in_words;
    ev.input_bus_transfers = positions * window_bits / config.input_bus.width_bits as f64;
    ev.input_buffer_writes =
        positions * map.channel_groups as f64 * window_bits / config.input_buffer.bus_bits as f64;
    // one digit per wordline of every row group for each active group iteration
    let digits_per_group = (map.rows.min(config.crossbar_rows) * 2) as f64;
    ev.input_buffer_reads = group_active as f64 * map.row_groups as f64 * digits_per_group
        / config.input_buffer.bus_bits as f64;
    let acc_words = config.accumulator_bits as f64 / config.output_bus.width_bits as f64;
    let spanned: f64 = (0..map.channels)
        .map(|c| map.imas_per_group[map.group_of(c)] as f64)
        .sum();
    ev.output_buffer_writes = outputs * map.row_groups as f64 * config.accumulator_bits as f64
        / config.output_buffer.bus_bits as f64;
    ev.output_bus_transfers = positions * spanned * acc_words;
    ev.output_memory_writes = outputs * map.act_bits as f64 / config.output_memory.bus_bits as f64;
    ev.checks = checks as f64;
    ev.ima_iterations = ima_iters as f64;
    Ok(ev)
}

/// Events of one frame, one entry per MAC layer of `plan`.
pub fn count_events(
    traces: &[LayerTrace],
    plan: &MappingPlan,
    config: &HwConfig,
) -> Result<Vec<LayerEvents>> {
    if traces.len() != plan.layers.len() {
        return Err(Error::LengthMismatch {
            left: traces.len(),
            right: plan.layers.len(),
        });
    }
    traces
        .iter()
        .zip(&plan.layers)
        .map(|(t, m)| {
            if t.layer != m.layer {
                return Err(Error::InvalidModel(format!(
                    "trace for layer {} paired with mapping of layer {}",
                    t.layer, m.layer
                )));
            }
            layer_events(t, m, config)
        })
        .collect()
}

/// Per-frame mean of the events of several frames.
pub fn mean_events(frames: &[Vec<LayerEvents>]) -> Result<Vec<LayerEvents>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidDataset("no frames to average".into()))?;
    let mut acc = first.clone();
    for f in &frames[1..] {
        if f.len() != acc.len() {
            return Err(Error::LengthMismatch {
                left: acc.len(),
                right: f.len(),
            });
        }
        for (a, b) in acc.iter_mut().zip(f) {
            a.add(b);
        }
    }
    let k = 1.0 / frames.len() as f64;
    acc.iter_mut().for_each(|e| e.scale(k));
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerTiming {
    pub layer: usize,
    pub latency_ns: f64,
    pub iteration_slots: f64,
    pub slot_ns: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub layers: Vec<LayerTiming>,
    /// Layers run one after the other.
    pub frame_latency_ns: f64,
    pub throughput_fps: f64,
}

pub fn timing_of(events: &[LayerEvents]) -> TimingReport {
    let layers: Vec<LayerTiming> = events
        .iter()
        .map(|e| LayerTiming {
            layer: e.layer,
            latency_ns: e.latency_ns(),
            iteration_slots: e.iteration_slots,
            slot_ns: e.slot_ns,
        })
        .collect();
    let frame: f64 = layers.iter().map(|l| l.latency_ns).sum();
    TimingReport {
        layers,
        frame_latency_ns: frame,
        throughput_fps: if frame > 0.0 { 1e9 / frame } else { 0.0 },
    }
}

pub fn simulate_timing(
    traces: &[LayerTrace],
    plan: &MappingPlan,
    config: &HwConfig,
) -> Result<TimingReport> {
    Ok(timing_of(&count_events(traces, plan, config)?))
}

/// Itemized energy of one frame in joules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub dynamic: BTreeMap<String, f64>,
    pub leakage: BTreeMap<String, f64>,
    /// Cost of the termination hardware, also included in `total_j`.
    pub overhead: BTreeMap<String, f64>,
    pub dynamic_j: f64,
    pub leakage_j: f64,
    pub overhead_j: f64,
    pub total_j: f64,
    /// `overhead_j / total_j`.
    pub overhead_share: f64,
}

const PJ: f64 = 1e-12;
const NJ: f64 = 1e-9;

/// Energy of one frame. `estimation_hw` adds the LUT, evaluation logic and
/// the extra accumulator traffic that early termination requires.
pub fn energy_of(
    events: &[LayerEvents],
    plan: &MappingPlan,
    config: &HwConfig,
    benchmark: Option<&str>,
    estimation_hw: bool,
) -> EnergyReport {
    let mut dynamic = BTreeMap::new();
    let mut overhead = BTreeMap::new();
    let add = |m: &mut BTreeMap<String, f64>, k: &str, v: f64| {
        *m.entry(k.to_string()).or_insert(0.0) += v
    };

    let xbar_mw = config.crossbar.power_for(benchmark);
    for e in events {
        let ipu_ns = e.ipu_channel_iterations * e.slot_ns;
        add(&mut dynamic, "dac", config.dac.power_mw * ipu_ns * PJ);
        add(&mut dynamic, "adc", config.adc.power_mw * ipu_ns * PJ);
        add(&mut dynamic, "crossbar", xbar_mw * ipu_ns * PJ);
        add(
            &mut dynamic,
            "sample_hold",
            config.sample_hold.power_mw * ipu_ns * PJ,
        );
        add(
            &mut dynamic,
            "ipu_shift_add",
            config.ipu_shift_add.power_mw * ipu_ns * PJ,
        );
        add(
            &mut dynamic,
            "tile_shift_add",
            config.tile_shift_add.power_per_unit_mw() * e.channel_iterations * e.slot_ns * PJ,
        );
        add(
            &mut dynamic,
            "input_memory",
            e.input_memory_reads * config.input_memory.access_nj * NJ,
        );
        add(
            &mut dynamic,
            "input_bus",
            e.input_bus_transfers * config.input_bus.transfer_nj * NJ,
        );
        add(
            &mut dynamic,
            "input_buffer",
            (e.input_buffer_writes + e.input_buffer_reads) * config.input_buffer.access_nj * NJ,
        );
        add(
            &mut dynamic,
            "output_buffer",
            e.output_buffer_writes * config.output_buffer.access_nj * NJ,
        );
        add(
            &mut dynamic,
            "output_bus",
            e.output_bus_transfers * config.output_bus.transfer_nj * NJ,
        );
        add(
            &mut dynamic,
            "output_memory",
            e.output_memory_writes * config.output_memory.access_nj * NJ,
        );

        if estimation_hw {
            let acc_words = config.accumulator_bits as f64 / config.output_bus.width_bits as f64;
            let lut_words = 2.0 * config.lut_entry_bits as f64 / config.lut.bus_bits as f64;
            add(
                &mut overhead,
                "eval_logic",
                config.eval_logic.power_per_unit_mw() * config.stage_ns * e.checks * PJ,
            );
            add(
                &mut overhead,
                "lut",
                e.checks * lut_words * config.lut.access_nj * NJ,
            );
            add(
                &mut overhead,
                "accumulator_bus",
                e.ima_iterations * acc_words * config.output_bus.transfer_nj * NJ,
            );
            let mem_words =
                2.0 * config.accumulator_bits as f64 / config.output_memory.bus_bits as f64;
            add(
                &mut overhead,
                "accumulator_memory",
                e.channel_iterations * mem_words * config.output_memory.access_nj * NJ,
            );
        }
    }

    // unit-nanoseconds of powered tiles and IMAs
    let (tile_ns, ima_ns) = match config.leakage_scope {
        LeakageScope::Frame => {
            let latency_ns: f64 = events.iter().map(|e| e.latency_ns()).sum();
            (
                plan.tiles_used as f64 * latency_ns,
                plan.imas_used as f64 * latency_ns,
            )
        }
        LeakageScope::Layer => events.iter().fold((0.0, 0.0), |(t, i), e| {
            let (tiles, imas) = plan
                .for_layer(e.layer)
                .map_or((0, 0), |m| (m.tiles(), m.imas()));
            (
                t + tiles as f64 * e.latency_ns(),
                i + imas as f64 * e.latency_ns(),
            )
        }),
    };
    let mut leakage = BTreeMap::new();
    let mut leak = |k: &str, unit_ns: f64, mw: f64| {
        leakage.insert(k.to_string(), unit_ns * mw * PJ);
    };
    leak("input_memory", tile_ns, config.input_memory.leakage_mw);
    leak("output_memory", tile_ns, config.output_memory.leakage_mw);
    leak("input_buffer", ima_ns, config.input_buffer.leakage_mw);
    leak("output_buffer", ima_ns, config.output_buffer.leakage_mw);
    if estimation_hw {
        overhead.insert("lut_leakage".into(), tile_ns * config.lut.leakage_mw * PJ);
    }

    let dynamic_j: f64 = dynamic.values().sum();
    let leakage_j: f64 = leakage.values().sum();
    let overhead_j: f64 = overhead.values().sum();
    let total_j = dynamic_j + leakage_j + overhead_j;
    EnergyReport {
        dynamic,
        leakage,
        overhead,
        dynamic_j,
        leakage_j,
        overhead_j,
        total_j,
        overhead_share: if total_j > 0.0 {
            overhead_j / total_j
        } else {
            0.0
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaReport {
    /// Square micrometres per component class, summed over used units.
    pub items: BTreeMap<String, f64>,
    pub total_um2: f64,
    pub total_mm2: f64,
}

pub fn area_of(plan: &MappingPlan, config: &HwConfig, estimation_hw: bool) -> AreaReport {
    let tiles = plan.tiles_used as f64;
    let imas = plan.imas_used as f64;
    let ipus = imas * config.ipus_per_ima as f64;
    let mut items = BTreeMap::new();
    let mut put = |k: &str, v: f64| {
        items.insert(k.to_string(), v);
    };
    put("input_memory", tiles * config.input_memory.area_um2);
    put("output_memory", tiles * config.output_memory.area_um2);
    put("input_bus", tiles * config.input_bus.area_um2);
    put("output_bus", tiles * config.output_bus.area_um2);
    put("tile_shift_add", tiles * config.tile_shift_add.area_um2);
    put("input_buffer", imas * config.input_buffer.area_um2);
    put("output_buffer", imas * config.output_buffer.area_um2);
    put("dac", ipus * config.dac.area_um2);
    put("adc", ipus * config.adc.area_um2);
    put("crossbar", ipus * config.crossbar.area_um2);
    put("sample_hold", ipus * config.sample_hold.area_um2);
    put("ipu_shift_add", ipus * config.ipu_shift_add.area_um2);
    if estimation_hw {
        put("lut", tiles * config.lut.area_um2);
        put("eval_logic", tiles * config.eval_logic.area_um2);
    }
    let total: f64 = items.values().sum();
    AreaReport {
        items,
        total_um2: total,
        total_mm2: total * 1e-6,
    }
}

/// Latency, energy and area of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HwReport {
    pub estimation_hw: bool,
    pub timing: TimingReport,
    pub energy: EnergyReport,
    pub area: AreaReport,
    pub energy_per_frame_j: f64,
    pub frames_per_joule: f64,
    pub fps_per_mm2: f64,
    pub events: Vec<LayerEvents>,
}

pub fn evaluate_events(
    events: Vec<LayerEvents>,
    plan: &MappingPlan,
    config: &HwConfig,
    benchmark: Option<&str>,
    estimation_hw: bool,
) -> HwReport {
    let timing = timing_of(&events);
    let energy = energy_of(&events, plan, config, benchmark, estimation_hw);
    let area = area_of(plan, config, estimation_hw);
    HwReport {
        estimation_hw,
        energy_per_frame_j: energy.total_j,
        frames_per_joule: if energy.total_j > 0.0 {
            1.0 / energy.total_j
        } else {
            0.0
        },
        fps_per_mm2: if area.total_mm2 > 0.0 {
            timing.throughput_fps / area.total_mm2
        } else {
            0.0
        },
        timing,
        energy,
        area,
        events,
    }
}

/// Report averaged over the frames in `traces` (one trace set per frame).
pub fn evaluate(
    model: &NetworkModel,
    plan: &MappingPlan,
    traces: &[Vec<LayerTrace>],
    config: &HwConfig,
    estimation_hw: bool,
) -> Result<HwReport> {
    let frames = traces
        .iter()
        .map(|t| count_events(t, plan, config))
        .collect::<Result<Vec<_>>>()?;
    let events = mean_events(&frames)?;
    Ok(evaluate_events(
        events,
        plan,
        config,
        model.benchmark.as_deref(),
        estimation_hw,
    ))
}

/// Baseline (no termination hardware, full iterations) against a reduced run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: HwReport,
    pub reduced: HwReport,
    pub throughput_ratio: f64,
    pub energy_efficiency_ratio: f64,
    pub area_efficiency_ratio: f64,
    /// Relative area added by the termination hardware.
    pub area_overhead: f64,
    pub overhead_share: f64,
}

/// Baseline (no estimation hardware) against `reduced` traces run on
/// hardware with the estimation units.
pub fn compare(
    model: &NetworkModel,
    plan: &MappingPlan,
    config: &HwConfig,
    reduced: &[Vec<LayerTrace>],
) -> Result<Comparison> {
    compare_with(model, plan, config, reduced, true)
}

/// As [`compare`], choosing whether the reduced side carries the
/// estimation hardware.
pub fn compare_with(
    model: &NetworkModel,
    plan: &MappingPlan,
    config: &HwConfig,
    reduced: &[Vec<LayerTrace>],
    estimation_hw: bool,
) -> Result<Comparison> {
    let base = crate::engine::baseline_traces(model);
    let baseline = evaluate(model, plan, std::slice::from_ref(&base), config, false)?;
    let reduced = evaluate(model, plan, reduced, config, estimation_hw)?;
    let div = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    Ok(Comparison {
        throughput_ratio: div(
            reduced.timing.throughput_fps,
            baseline.timing.throughput_fps,
        ),
        energy_efficiency_ratio: div(baseline.energy.total_j, reduced.energy.total_j),
        area_efficiency_ratio: div(reduced.fps_per_mm2, baseline.fps_per_mm2),
        area_overhead: div(reduced.area.total_um2, baseline.area.total_um2) - 1.0,
        overhead_share: reduced.energy.overhead_share,
        baseline,
        reduced,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hwmodel::mapping::IpuSlot;
    use crate::net::LayerKind;

    fn mapping(channels: usize, positions: usize, row_groups: usize) -> (MappingPlan, HwConfig) {
        let cfg = HwConfig::default();
        let cpi = 16;
        let groups = channels.div_ceil(cpi);
        let slots = (0..groups * row_groups)
            .map(|i| IpuSlot {
                tile: 0,
                ima: 0,
                ipu: i,
                channel_group: i / row_groups,
                row_group: i % row_groups,
            })
            .collect();
        let m = LayerMapping {
            layer: 0,
            kind: LayerKind::Conv,
            rows: 100 * row_groups,
            row_groups,
            channels,
            channels_per_ipu: cpi,
            channel_groups: groups,
            positions,
            act_bits: 16,
            weight_bits: 16,
            slots,
            imas_per_group: vec![1; groups],
        };
        (
            MappingPlan {
                layers: vec![m],
                ipus_used: groups * row_groups,
                imas_used: 1,
                tiles_used: 1,
            },
            cfg,
        )
    }

    #[test]
    fn full_iteration_latency() {
        let (plan, cfg) = mapping(16, 3, 1);
        let t = simulate_timing(&[LayerTrace::full(0, 3, 16, 16)], &plan, &cfg).unwrap();
        // 16 live channels x 6.25 ns per iteration, 16 iterations per position
        assert!((t.layers[0].latency_ns - 3.0 * 1600.0).abs() < 1e-9);
        assert!((t.frame_latency_ns - 4800.0).abs() < 1e-9);
    }

    #[test]
    fn busiest_group_sets_the_pace() {
        let (plan, cfg) = mapping(32, 1, 1);
        let mut tr = LayerTrace::full(0, 1, 32, 16);
        // group 0: every channel stops after 2; group 1: one channel runs 16
        tr.executed[..16].iter_mut().for_each(|e| *e = 2);
        tr.executed[16..].iter_mut().for_each(|e| *e = 1);
        tr.executed[20] = 16;
        let t = simulate_timing(&[tr], &plan, &cfg).unwrap();
        // t=1: 16, t=2: 16, t=3..16: 1
        assert_eq!(t.layers[0].iteration_slots, 16.0 + 16.0 + 14.0);
    }

    #[test]
    fn zero_event_run_is_leakage_only() {
        let (plan, cfg) = mapping(16, 1, 1);
        let ev = vec![LayerEvents {
            layer: 0,
            slot_ns: 6.25,
            iteration_slots: 10.0,
            ..LayerEvents::default()
        }];
        let e = energy_of(&ev, &plan, &cfg, None, false);
        assert_eq!(e.dynamic_j, 0.0);
        assert!(e.leakage_j > 0.0);
        assert_eq!(e.total_j, e.leakage_j);
    }

    #[test]
    fn totals_are_item_sums() {
        let (plan, cfg) = mapping(40, 4, 3);
        let mut tr = LayerTrace::full(0, 4, 40, 16);
        for (i, e) in tr.executed.iter_mut().enumerate() {
            *e = (i % 16 + 1) as u8;
        }
        let rep = evaluate_events(
            count_events(&[tr], &plan, &cfg).unwrap(),
            &plan,
            &cfg,
            Some("mnist"),
            true,
        );
        let e = &rep.energy;
        let sum: f64 = e
            .dynamic
            .values()
            .chain(e.leakage.values())
            .chain(e.overhead.values())
            .sum();
        assert!((sum - e.total_j).abs() <= 1e-12 * e.total_j);
        assert!(e.overhead_share > 0.0 && e.overhead_share < 1.0);
        let a: f64 = rep.area.items.values().sum();
        assert!((a - rep.area.total_um2).abs() < 1e-6);
    }

    #[test]
    fn mismatched_trace_is_rejected() {
        let (plan, cfg) = mapping(16, 2, 1);
        assert!(count_events(&[LayerTrace::full(0, 3, 16, 16)], &plan, &cfg).is_err());
        assert!(count_events(&[], &plan, &cfg).is_err());
    }
}
