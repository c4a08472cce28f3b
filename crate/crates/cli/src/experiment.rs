//! Loading inputs and running paired exact / reduced inference.

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use xbar_core::engine::{
    merge_runs, reduction_report, LayerRunStats, LayerTrace, ReducedRunner, ReductionReport,
    TerminationPolicy,
};
use xbar_core::estimator::{
    build_lut, extract_probabilities, BitProbability, BoundsMode, EstimateLut,
};
use xbar_core::net::{argmax, infer_exact, load_dataset, LabeledImage, RawImages};
use xbar_core::{zoo, NetworkModel};

use crate::config::RunConfig;

pub const ZOO_PREFIX: &str = "zoo:";
pub const DEFAULT_ZOO_BITS: u8 = 16;

/// Model named by `cfg.model`. For directories, `--bits` picks a
/// `<bits>bit/` subdirectory when one exists.
pub fn load_model(cfg: &RunConfig) -> Result<NetworkModel> {
    if let Some(name) = cfg.model.strip_prefix(ZOO_PREFIX) {
        return Ok(zoo::by_name(name, cfg.bits.unwrap_or(DEFAULT_ZOO_BITS))?);
    }
    let mut dir = std::path::PathBuf::from(&cfg.model);
    if let Some(b) = cfg.bits {
        let sub = dir.join(format!("{b}bit"));
        if sub.is_dir() {
            dir = sub;
        }
    }
    let model =
        NetworkModel::load(&dir).with_context(|| format!("loading model {}", dir.display()))?;
    if let Some(b) = cfg.bits {
        let got = model.input_spec().bits;
        if got != b {
            bail!(
                "model {} is {got}-bit but --bits {b} was requested",
                dir.display()
            );
        }
    }
    Ok(model)
}

/// Test and calibration images.
pub struct ImageSets {
    pub test: Vec<LabeledImage>,
    pub calib: Vec<LabeledImage>,
    pub synthetic: bool,
}

/// Test images come from `dataset` (synthetic when absent). Calibration
/// images come from `calib`, or else from a seeded sample of the dataset
/// disjoint from the test images.
pub fn load_images(cfg: &RunConfig, model: &NetworkModel) -> Result<ImageSets> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let classes = model.num_classes.min(u8::MAX as usize) as u8;
    let (test_raw, calib_raw, synthetic) = match &cfg.dataset {
        None => (
            zoo::synthetic_images(model.input_shape, cfg.images_n, classes, cfg.seed),
            zoo::synthetic_images(model.input_shape, cfg.calib_n, classes, cfg.seed ^ 0x5eed),
            true,
        ),
        Some(path) => {
            let all = load_dataset(path).with_context(|| format!("loading {}", path.display()))?;
            if all.is_empty() {
                bail!("dataset {} holds no images", path.display());
            }
            match &cfg.calib {
                Some(cp) => {
                    let calib =
                        load_dataset(cp).with_context(|| format!("loading {}", cp.display()))?;
                    (
                        all.take(cfg.images_n),
                        sample(&calib, cfg.calib_n, &mut rng),
                        false,
                    )
                }
                None => {
                    let mut idx: Vec<usize> = (0..all.len()).collect();
                    idx.shuffle(&mut rng);
                    let nc = cfg.calib_n.min(all.len().saturating_sub(1));
                    let (c, rest) = idx.split_at(nc);
                    let mut t: Vec<usize> = rest.iter().copied().take(cfg.images_n).collect();
                    t.sort_unstable();
                    let mut c = c.to_vec();
                    c.sort_unstable();
                    (all.select(&t), all.select(&c), false)
                }
            }
        }
    };
    Ok(ImageSets {
        test: test_raw.prepare(model)?,
        calib: calib_raw.prepare(model)?,
        synthetic,
    })
}

fn sample(raw: &RawImages, n: usize, rng: &mut ChaCha8Rng) -> RawImages {
    let mut idx: Vec<usize> = (0..raw.len()).collect();
    idx.shuffle(rng);
    idx.truncate(n);
    idx.sort_unstable();
    raw.select(&idx)
}

pub fn probabilities(model: &NetworkModel, calib: &[LabeledImage]) -> Result<BitProbability> {
    if calib.is_empty() {
        bail!("calibration needs at least one image (calib-n is 0)");
    }
    Ok(extract_probabilities(model, calib)?)
}

/// Table for `bounds`, built from calibration images when statistical.
pub fn make_lut(
    model: &NetworkModel,
    bounds: BoundsMode,
    calib: &[LabeledImage],
) -> Result<EstimateLut> {
    let probs = match bounds {
        BoundsMode::Statistical => Some(probabilities(model, calib)?),
        _ => None,
    };
    Ok(build_lut(model, probs.as_ref(), bounds)?)
}

/// Table needed by `policy`, if any: loaded from `--lut` or built.
pub fn lut_for(
    cfg: &RunConfig,
    model: &NetworkModel,
    policy: &TerminationPolicy,
    calib: &[LabeledImage],
) -> Result<Option<EstimateLut>> {
    if !policy.any_armed() || policy.bounds == BoundsMode::Oracle {
        return Ok(None);
    }
    if let Some(p) = &cfg.lut {
        let lut = EstimateLut::load(p)?;
        if lut.mode != policy.bounds {
            bail!(
                "table {} holds {} bounds but the policy needs {}",
                p.display(),
                lut.mode.as_str(),
                policy.bounds.as_str()
            );
        }
        return Ok(Some(lut));
    }
    make_lut(model, policy.bounds, calib).map(Some)
}

/// Exact predictions of every test image.
pub struct ExactRun {
    pub predictions: Vec<usize>,
    pub accuracy: f64,
}

pub fn run_exact(model: &NetworkModel, images: &[LabeledImage]) -> Result<ExactRun> {
    let predictions = images
        .par_iter()
        .map(|img| infer_exact(model, &img.pixels).map(|o| argmax(&o.logits)))
        .collect::<xbar_core::Result<Vec<_>>>()?;
    Ok(ExactRun {
        accuracy: accuracy_of(&predictions, images),
        predictions,
    })
}

fn accuracy_of(pred: &[usize], images: &[LabeledImage]) -> f64 {
    let correct = pred
        .iter()
        .zip(images)
        .filter(|(p, i)| **p == i.label)
        .count();
    correct as f64 / images.len() as f64
}

/// Reduced run over a test set, per-image results kept in image order.
pub struct ReducedRun {
    pub predictions: Vec<usize>,
    pub accuracy: f64,
    /// Executed bit-serial iterations per image.
    pub executed: Vec<u64>,
    pub stats: Vec<LayerRunStats>,
    pub report: ReductionReport,
    pub traces: Vec<Vec<LayerTrace>>,
}

pub fn run_reduced(
    model: &NetworkModel,
    images: &[LabeledImage],
    policy: &TerminationPolicy,
    lut: Option<&EstimateLut>,
    keep_traces: bool,
) -> Result<ReducedRun> {
    let runner = ReducedRunner::new(model, policy, lut)?;
    let outs = images
        .par_iter()
        .map(|img| {
            runner.infer(&img.pixels).map(|o| {
                let exec = o.stats.iter().map(|s| s.iterations_executed).sum::<u64>();
                let traces = if keep_traces { o.traces } else { Vec::new() };
                (argmax(&o.logits), exec, o.stats, traces)
            })
        })
        .collect::<xbar_core::Result<Vec<_>>>()?;
    let mut stats = Vec::new();
    let mut predictions = Vec::with_capacity(outs.len());
    let mut executed = Vec::with_capacity(outs.len());
    let mut traces = Vec::new();
    for (p, e, s, t) in outs {
        merge_runs(&mut stats, &s);
        predictions.push(p);
        executed.push(e);
        if keep_traces {
            traces.push(t);
        }
    }
    Ok(ReducedRun {
        accuracy: accuracy_of(&predictions, images),
        report: reduction_report(&stats),
        predictions,
        executed,
        stats,
        traces,
    })
}

/// Per-layer line of the results document.
#[derive(Clone, Debug, Serialize)]
pub struct LayerSummary {
    pub layer: usize,
    pub name: String,
    pub kind: &'static str,
    pub has_relu: bool,
    pub reduction: f64,
    pub mac_count: u64,
    pub relu_bypass: u64,
    pub approx: u64,
    pub completed: u64,
    pub negative_outputs: u64,
    pub negative_detected: u64,
    pub false_bypass: u64,
}

pub fn layer_summaries(model: &NetworkModel, stats: &[LayerRunStats]) -> Vec<LayerSummary> {
    stats
        .iter()
        .map(|s| LayerSummary {
            layer: s.layer,
            name: model.layers[s.layer].desc.name.clone(),
            kind: s.kind.as_str(),
            has_relu: s.has_relu,
            reduction: s.reduction(),
            mac_count: s.mac_count,
            relu_bypass: s.relu_bypass,
            approx: s.approx,
            completed: s.completed,
            negative_outputs: s.negative_outputs,
            negative_detected: s.negative_detected,
            false_bypass: s.false_bypass,
        })
        .collect()
}

/// Images whose prediction changed from the exact run.
pub fn flipped(exact: &ExactRun, reduced: &ReducedRun) -> usize {
    exact
        .predictions
        .iter()
        .zip(&reduced.predictions)
        .filter(|(a, b)| a != b)
        .count()
}
