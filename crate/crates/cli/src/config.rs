//! Run configuration: an optional TOML file overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use xbar_core::engine::TerminationPolicy;
use xbar_core::estimator::BoundsMode;
use xbar_core::hwmodel::HwConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Relu,
    Approx,
    Combined,
    /// Approximation checked against the exact remaining sum.
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Bounds {
    Worst,
    Stat,
    Oracle,
}

impl Bounds {
    pub fn mode(self) -> BoundsMode {
        match self {
            Bounds::Worst => BoundsMode::WorstCase,
            Bounds::Stat => BoundsMode::Statistical,
            Bounds::Oracle => BoundsMode::Oracle,
        }
    }
}

/// Every tunable of a run. All fields can come from `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Model directory, or `zoo:lenet5` / `zoo:cifar_quick`.
    pub model: String,
    /// Test images; synthetic images are generated when absent.
    pub dataset: Option<PathBuf>,
    /// Calibration images; defaults to a disjoint sample of `dataset`.
    pub calib: Option<PathBuf>,
    pub bits: Option<u8>,
    pub mode: Mode,
    pub bounds: Bounds,
    pub threshold: f64,
    pub thresholds: Vec<f64>,
    pub calib_n: usize,
    pub images_n: usize,
    pub hw_config: Option<PathBuf>,
    pub lut: Option<PathBuf>,
    pub approx_fc: bool,
    /// Injected CONV reduction for `report`.
    pub reduction: Option<f64>,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: "zoo:cifar_quick".into(),
            dataset: None,
            calib: None,
            bits: None,
            mode: Mode::Combined,
            bounds: Bounds::Stat,
            threshold: 0.8,
            thresholds: vec![0.0, 0.2, 0.5, 0.8, 1.1],
            calib_n: 512,
            images_n: 500,
            hw_config: None,
            lut: None,
            approx_fc: false,
            reduction: None,
            out: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            bail!(
                "threshold must be a finite non-negative number, got {}",
                self.threshold
            );
        }
        if let Some(t) = self
            .thresholds
            .iter()
            .find(|t| !(**t >= 0.0 && t.is_finite()))
        {
            bail!("sweep threshold {t} is not a finite non-negative number");
        }
        if self.images_n == 0 {
            bail!("images-n must be at least 1");
        }
        for (name, p) in [
            ("dataset", &self.dataset),
            ("calib", &self.calib),
            ("hw-config", &self.hw_config),
            ("lut", &self.lut),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    bail!("{name} path {} does not exist", p.display());
                }
            }
        }
        if let Some(b) = self.bits {
            if !(2..=16).contains(&b) {
                bail!("bits must be in 2..=16, got {b}");
            }
        }
        Ok(())
    }

    /// Termination policy for `mode` at `threshold`.
    pub fn policy_at(&self, threshold: f64) -> TerminationPolicy {
        let b = self.bounds.mode();
        let mut p = match self.mode {
            Mode::Exact => TerminationPolicy::exact(),
            Mode::Relu => TerminationPolicy::relu(b),
            Mode::Approx => TerminationPolicy::approx(threshold, b),
            Mode::Combined => TerminationPolicy::combined(threshold, b),
            Mode::Oracle => TerminationPolicy::approx(threshold, BoundsMode::Oracle),
        };
        p.approx_fc = self.approx_fc;
        p
    }

    pub fn policy(&self) -> TerminationPolicy {
        self.policy_at(self.threshold)
    }

    pub fn hardware(&self) -> Result<HwConfig> {
        match &self.hw_config {
            None => Ok(HwConfig::default()),
            Some(p) => load_hw_config(p),
        }
    }
}

/// Load a hardware config from JSON or TOML (by extension).
pub fn load_hw_config(path: &Path) -> Result<HwConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: HwConfig = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        _ => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// TOML file with any of the options below
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model directory or zoo:lenet5 / zoo:cifar_quick
    #[arg(long)]
    pub model: Option<String>,
    /// Test images (MNIST IDX file or directory, CIFAR-10 .bin or directory)
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Calibration images, same formats as --dataset
    #[arg(long)]
    pub calib: Option<PathBuf>,
    #[arg(long)]
    pub bits: Option<u8>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, value_enum)]
    pub bounds: Option<Bounds>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Comma-separated thresholds for sweep
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub calib_n: Option<usize>,
    #[arg(long)]
    pub images_n: Option<usize>,
    /// Hardware constants (JSON or TOML)
    #[arg(long)]
    pub hw_config: Option<PathBuf>,
    /// Precomputed estimate table from `stats`
    #[arg(long)]
    pub lut: Option<PathBuf>,
    /// Apply the approximation rule to FC layers too
    #[arg(long)]
    pub approx_fc: bool,
    /// CONV computation reduction to inject (report only)
    #[arg(long)]
    pub reduction: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { cfg.$f = v.clone(); } )* };
        }
        over!(model, mode, bounds, threshold, thresholds, calib_n, images_n, out, seed);
        macro_rules! over_opt {
            ($($f:ident),*) => { $( if self.$f.is_some() { cfg.$f = self.$f.clone(); } )* };
        }
        over_opt!(dataset, calib, bits, hw_config, lut, reduction);
        if self.approx_fc {
            cfg.approx_fc = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
