//! The four subcommands. Each writes its files into `cfg.out`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use xbar_core::engine::ReductionReport;
use xbar_core::estimator::{build_lut, BoundsMode};
use xbar_core::hwmodel::{compare, compare_with, inject_reduction, map_network, Comparison};
use xbar_core::NetworkModel;

use crate::config::{Bounds, Mode, RunConfig};
use crate::experiment::{
    flipped, layer_summaries, load_images, load_model, lut_for, probabilities, run_exact,
    run_reduced, LayerSummary,
};

pub const RESULTS_JSON: &str = "results.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const PROBS_JSON: &str = "probabilities.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report_layers.csv";

/// `lut_worst.json` / `lut_stat.json`, named after the `--bounds` values.
pub fn lut_file(bounds: BoundsMode) -> &'static str {
    match bounds {
        BoundsMode::WorstCase => "lut_worst.json",
        BoundsMode::Statistical => "lut_stat.json",
        BoundsMode::Oracle => "lut_oracle.json",
    }
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    Ok(&cfg.out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ModelInfo {
    name: String,
    benchmark: Option<String>,
    bits: u8,
    layers: usize,
}

fn model_info(model: &NetworkModel) -> ModelInfo {
    ModelInfo {
        name: model.name.clone(),
        benchmark: model.benchmark.clone(),
        bits: model.input_spec().bits,
        layers: model.layers.len(),
    }
}

/// Files written by `stats`.
#[derive(Debug)]
pub struct StatsOutput {
    pub probabilities: PathBuf,
    pub luts: Vec<PathBuf>,
}

/// Extract digit probabilities from calibration images and build the
/// worst-case and statistical tables.
pub fn cmd_stats(cfg: &RunConfig) -> Result<StatsOutput> {
    if cfg.calib_n == 0 {
        bail!("calib-n must be at least 1 for stats");
    }
    let model = load_model(cfg)?;
    let images = load_images(cfg, &model)?;
    let probs = probabilities(&model, &images.calib)?;
    let dir = out_dir(cfg)?;
    let probs_path = dir.join(PROBS_JSON);
    probs.save(&probs_path)?;
    let mut luts = Vec::new();
    for (mode, p) in [
        (BoundsMode::WorstCase, None),
        (BoundsMode::Statistical, Some(&probs)),
    ] {
        let path = dir.join(lut_file(mode));
        build_lut(&model, p, mode)?.save(&path)?;
        luts.push(path);
    }
    println!(
        "{}: {} calibration images -> {}",
        model.name,
        images.calib.len(),
        probs_path.display()
    );
    Ok(StatsOutput {
        probabilities: probs_path,
        luts,
    })
}

#[derive(Serialize)]
struct RunSettings {
    mode: Mode,
    bounds: Bounds,
    threshold: f64,
    approx_fc: bool,
    images: usize,
    calibration_images: usize,
    synthetic_images: bool,
    seed: u64,
}

#[derive(Serialize)]
struct Accuracy {
    exact: f64,
    reduced: f64,
    drop: f64,
    flipped_predictions: usize,
}

#[derive(Serialize)]
struct RunResults {
    model: ModelInfo,
    settings: RunSettings,
    accuracy: Accuracy,
    reduction: ReductionReport,
    layers: Vec<LayerSummary>,
    hardware: Comparison,
}

#[derive(Debug, Serialize)]
pub struct SummaryRow {
    pub model: String,
    pub bits: u8,
    pub mode: String,
    pub bounds: String,
    pub threshold: f64,
    pub images: usize,
    pub accuracy_exact: f64,
    pub accuracy_reduced: f64,
    pub reduction_overall: f64,
    pub reduction_negative_outputs: f64,
    pub detection_rate: f64,
    pub negative_share: f64,
    pub throughput_ratio: f64,
    pub energy_efficiency_ratio: f64,
    pub area_efficiency_ratio: f64,
    pub overhead_share: f64,
}

fn enum_str<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Paired exact and reduced inference plus the hardware comparison.
pub fn cmd_run(cfg: &RunConfig) -> Result<SummaryRow> {
    let model = load_model(cfg)?;
    let images = load_images(cfg, &model)?;
    let policy = cfg.policy();
    let lut = lut_for(cfg, &model, &policy, &images.calib)?;
    let exact = run_exact(&model, &images.test)?;
    let red = run_reduced(&model, &images.test, &policy, lut.as_ref(), true)?;
    let hw = cfg.hardware()?;
    let plan = map_network(&model, &hw)?;
    let cmp = compare_with(&model, &plan, &hw, &red.traces, policy.any_armed())?;

    let row = SummaryRow {
        model: model.name.clone(),
        bits: model.input_spec().bits,
        mode: enum_str(&cfg.mode),
        bounds: enum_str(&cfg.bounds),
        threshold: cfg.threshold,
        images: images.test.len(),
        accuracy_exact: exact.accuracy,
        accuracy_reduced: red.accuracy,
        reduction_overall: red.report.reduction_overall,
        reduction_negative_outputs: red.report.reduction_negative_outputs,
        detection_rate: red.report.detection_rate,
        negative_share: red.report.negative_share,
        throughput_ratio: cmp.throughput_ratio,
        energy_efficiency_ratio: cmp.energy_efficiency_ratio,
        area_efficiency_ratio: cmp.area_efficiency_ratio,
        overhead_share: cmp.overhead_share,
    };
    let results = RunResults {
        model: model_info(&model),
        settings: RunSettings {
            mode: cfg.mode,
            bounds: cfg.bounds,
            threshold: cfg.threshold,
            approx_fc: cfg.approx_fc,
            images: images.test.len(),
            calibration_images: images.calib.len(),
            synthetic_images: images.synthetic,
            seed: cfg.seed,
        },
        accuracy: Accuracy {
            exact: exact.accuracy,
            reduced: red.accuracy,
            drop: exact.accuracy - red.accuracy,
            flipped_predictions: flipped(&exact, &red),
        },
        reduction: red.report.clone(),
        layers: layer_summaries(&model, &red.stats),
        hardware: cmp,
    };
    let dir = out_dir(cfg)?;
    write_json(&dir.join(RESULTS_JSON), &results)?;
    write_csv(&dir.join(SUMMARY_CSV), std::slice::from_ref(&row))?;
    println!(
        "{} {}-bit {}: reduction {:.1}%, accuracy {:.2}% -> {:.2}%, throughput x{:.2}, energy x{:.2}",
        row.model,
        row.bits,
        row.mode,
        100.0 * row.reduction_overall,
        100.0 * row.accuracy_exact,
        100.0 * row.accuracy_reduced,
        row.throughput_ratio,
        row.energy_efficiency_ratio
    );
    Ok(row)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub bounds: String,
    pub mode: String,
    pub reduction: f64,
    pub accuracy: f64,
    pub accuracy_drop: f64,
    pub detection_rate: f64,
    /// Images whose executed iterations rose from the previous threshold.
    pub monotone_violations: usize,
}

/// Reduction and accuracy for every threshold, per bounds mode.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    if cfg.thresholds.is_empty() {
        bail!("sweep needs at least one threshold");
    }
    if cfg.mode == Mode::Exact {
        bail!("sweep needs a terminating mode, not exact");
    }
    let mut ts = cfg.thresholds.clone();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let model = load_model(cfg)?;
    let images = load_images(cfg, &model)?;
    let exact = run_exact(&model, &images.test)?;
    let bounds: &[Bounds] = match cfg.mode {
        Mode::Oracle => &[Bounds::Oracle],
        _ => &[Bounds::Worst, Bounds::Stat, Bounds::Oracle],
    };
    let mut rows = Vec::new();
    for &b in bounds {
        let mut sub = cfg.clone();
        sub.bounds = b;
        let lut = lut_for(&sub, &model, &sub.policy_at(ts[0]), &images.calib)?;
        let mut prev: Option<Vec<u64>> = None;
        for &t in &ts {
            let policy = sub.policy_at(t);
            let red = run_reduced(&model, &images.test, &policy, lut.as_ref(), false)?;
            let violations = prev.as_ref().map_or(0, |p| {
                p.iter().zip(&red.executed).filter(|(a, b)| b > a).count()
            });
            rows.push(SweepRow {
                threshold: t,
                bounds: enum_str(&b),
                mode: enum_str(&cfg.mode),
                reduction: red.report.reduction_overall,
                accuracy: red.accuracy,
                accuracy_drop: exact.accuracy - red.accuracy,
                detection_rate: red.report.detection_rate,
                monotone_violations: violations,
            });
            prev = Some(red.executed);
        }
    }
    write_csv(&out_dir(cfg)?.join(SWEEP_CSV), &rows)?;
    for r in &rows {
        println!(
            "T={:<5} {:<6} reduction {:>5.1}%  accuracy {:>6.2}%",
            r.threshold,
            r.bounds,
            100.0 * r.reduction,
            100.0 * r.accuracy
        );
    }
    Ok(rows)
}

#[derive(Serialize)]
struct HwReportDoc {
    model: ModelInfo,
    /// Injected CONV reduction, or the measured one.
    reduction: f64,
    injected: bool,
    hardware: Comparison,
}

#[derive(Debug, Serialize)]
pub struct ReportLayerRow {
    pub layer: usize,
    pub baseline_latency_ns: f64,
    pub reduced_latency_ns: f64,
}

/// Hardware comparison for an injected reduction (`--reduction`) or for
/// the traces of a reduced run.
pub fn cmd_report(cfg: &RunConfig) -> Result<Comparison> {
    let model = load_model(cfg)?;
    let hw = cfg.hardware()?;
    let plan = map_network(&model, &hw)?;
    let (traces, reduction, injected) = match cfg.reduction {
        Some(r) => (vec![inject_reduction(&model, r)?], r, true),
        None => {
            let images = load_images(cfg, &model)?;
            let policy = cfg.policy();
            let lut = lut_for(cfg, &model, &policy, &images.calib)?;
            let red = run_reduced(&model, &images.test, &policy, lut.as_ref(), true)?;
            (red.traces, red.report.reduction_overall, false)
        }
    };
    let cmp = compare(&model, &plan, &hw, &traces)?;
    let rows: Vec<ReportLayerRow> = cmp
        .baseline
        .timing
        .layers
        .iter()
        .zip(&cmp.reduced.timing.layers)
        .map(|(b, r)| ReportLayerRow {
            layer: b.layer,
            baseline_latency_ns: b.latency_ns,
            reduced_latency_ns: r.latency_ns,
        })
        .collect();
    let dir = out_dir(cfg)?;
    write_json(
        &dir.join(REPORT_JSON),
        &HwReportDoc {
            model: model_info(&model),
            reduction,
            injected,
            hardware: cmp.clone(),
        },
    )?;
    write_csv(&dir.join(REPORT_CSV), &rows)?;
    println!(
        "{}: reduction {:.1}% -> throughput x{:.3}, energy efficiency x{:.3}, overhead {:.2}%",
        model.name,
        100.0 * reduction,
        cmp.throughput_ratio,
        cmp.energy_efficiency_ratio,
        100.0 * cmp.overhead_share
    );
    Ok(cmp)
}
