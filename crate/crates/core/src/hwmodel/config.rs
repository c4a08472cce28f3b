//! Hardware organization and per-component constants.
//!
//! Power figures are totals for `count` instances at the stated clock;
//! memory and bus figures are per access (one bus-width word).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryParams {
    pub access_nj: f64,
    pub leakage_mw: f64,
    pub area_um2: f64,
    pub bus_bits: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusParams {
    pub transfer_nj: f64,
    pub area_um2: f64,
    pub width_bits: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitParams {
    pub power_mw: f64,
    pub area_um2: f64,
    pub count: u32,
}

impl UnitParams {
    pub fn power_per_unit_mw(&self) -> f64 {
        self.power_mw / self.count as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossbarParams {
    /// Power of the crossbar pair keyed by benchmark tag.
    pub power_mw: BTreeMap<String, f64>,
    pub default_power_mw: f64,
    pub area_um2: f64,
    pub count: u32,
}

impl CrossbarParams {
    pub fn power_for(&self, benchmark: Option<&str>) -> f64 {
        benchmark
            .and_then(|b| self.power_mw.get(&b.to_ascii_lowercase()).copied())
            .unwrap_or(self.default_power_mw)
    }
}

/// Which units leak while a layer runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageScope {
    /// Only the tiles and IMAs holding the running layer.
    #[default]
    Layer,
    /// Every used tile and IMA for the whole frame.
    Frame,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HwConfig {
    pub crossbar_rows: usize,
    pub crossbar_cols: usize,
    pub cell_bits: u32,
    pub ipus_per_ima: usize,
    pub imas_per_tile: usize,
    pub max_tiles: usize,
    /// Pipeline stage length.
    pub stage_ns: f64,
    /// ADC sample rate; one conversion per bitline of a channel.
    pub adc_hz: f64,
    /// Width of an accumulator word moved between IMAs and the tile.
    pub accumulator_bits: u32,
    /// Width of one stored Max or Min entry.
    pub lut_entry_bits: u32,
    pub leakage_scope: LeakageScope,

    pub input_memory: MemoryParams,
    pub output_memory: MemoryParams,
    pub lut: MemoryParams,
    pub input_bus: BusParams,
    pub output_bus: BusParams,
    pub input_buffer: MemoryParams,
    pub output_buffer: MemoryParams,

    pub dac: UnitParams,
    pub adc: UnitParams,
    pub crossbar: CrossbarParams,
    pub sample_hold: UnitParams,
    pub ipu_shift_add: UnitParams,

    pub eval_logic: UnitParams,
    pub tile_shift_add: UnitParams,
}

impl Default for HwConfig {
    fn default() -> Self {
        HwConfig {
            crossbar_rows: 128,
            crossbar_cols: 128,
            cell_bits: 2,
            ipus_per_ima: 8,
            imas_per_tile: 8,
            max_tiles: 1024,
            stage_ns: 6.25,
            adc_hz: 1.28e9,
            accumulator_bits: 32,
            lut_entry_bits: 16,
            leakage_scope: LeakageScope::Layer,
            input_memory: MemoryParams {
                access_nj: 0.0188,
                leakage_mw: 0.38,
                area_um2: 46000.0,
                bus_bits: 256,
            },
            output_memory: MemoryParams {
                access_nj: 0.0008,
                leakage_mw: 0.13,
                area_um2: 3900.0,
                bus_bits: 128,
            },
            lut: MemoryParams {
                access_nj: 0.0035,
                leakage_mw: 0.002,
                area_um2: 9600.0,
                bus_bits: 160,
            },
            input_bus: BusParams {
                transfer_nj: 0.0042,
                area_um2: 80000.0,
                width_bits: 256,
            },
            output_bus: BusParams {
                transfer_nj: 0.0020,
                area_um2: 39100.0,
                width_bits: 128,
            },
            input_buffer: MemoryParams {
                access_nj: 0.0019,
                leakage_mw: 0.42,
                area_um2: 7400.0,
                bus_bits: 256,
            },
            output_buffer: MemoryParams {
                access_nj: 0.0005,
                leakage_mw: 0.05,
                area_um2: 2600.0,
                bus_bits: 128,
            },
            dac: UnitParams {
                power_mw: 0.25,
                area_um2: 668.0,
                count: 256,
            },
            adc: UnitParams {
                power_mw: 3.1,
                area_um2: 1500.0,
                count: 1,
            },
            crossbar: CrossbarParams {
                power_mw: BTreeMap::from([
                    ("cifar10".to_string(), 1.5),
                    ("mnist".to_string(), 0.7),
                ]),
                default_power_mw: 1.5,
                area_um2: 264.0,
                count: 2,
            },
            sample_hold: UnitParams {
                power_mw: 0.001,
                area_um2: 5.0,
                count: 128,
            },
            ipu_shift_add: UnitParams {
                power_mw: 0.05,
                area_um2: 60.0,
                count: 1,
            },
            eval_logic: UnitParams {
                power_mw: 0.79,
                area_um2: 320.0,
                count: 8,
            },
            tile_shift_add: UnitParams {
                power_mw: 0.4,
                area_um2: 480.0,
                count: 8,
            },
        }
    }
}

impl HwConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        for (name, v) in [
            ("crossbar_rows", self.crossbar_rows),
            ("crossbar_cols", self.crossbar_cols),
            ("ipus_per_ima", self.ipus_per_ima),
            ("imas_per_tile", self.imas_per_tile),
            ("max_tiles", self.max_tiles),
            ("cell_bits", self.cell_bits as usize),
            ("accumulator_bits", self.accumulator_bits as usize),
            ("lut_entry_bits", self.lut_entry_bits as usize),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        let mems = [
            ("input_memory", &self.input_memory),
            ("output_memory", &self.output_memory),
            ("lut", &self.lut),
            ("input_buffer", &self.input_buffer),
            ("output_buffer", &self.output_buffer),
        ];
        let mut reals: Vec<(&str, f64)> =
            vec![("stage_ns", self.stage_ns), ("adc_hz", self.adc_hz)];
        for (n, m) in mems {
            reals.push((n, m.access_nj));
            reals.push((n, m.leakage_mw));
            reals.push((n, m.area_um2));
            if m.bus_bits == 0 {
                return bad(format!("{n}.bus_bits must be positive"));
            }
        }
        for (n, b) in [
            ("input_bus", &self.input_bus),
            ("output_bus", &self.output_bus),
        ] {
            reals.push((n, b.transfer_nj));
            reals.push((n, b.area_um2));
            if b.width_bits == 0 {
                return bad(format!("{n}.width_bits must be positive"));
            }
        }
        for (n, u) in [
            ("dac", &self.dac),
            ("adc", &self.adc),
            ("sample_hold", &self.sample_hold),
            ("ipu_shift_add", &self.ipu_shift_add),
            ("eval_logic", &self.eval_logic),
            ("tile_shift_add", &self.tile_shift_add),
        ] {
            reals.push((n, u.power_mw));
            reals.push((n, u.area_um2));
            if u.count == 0 {
                return bad(format!("{n}.count must be positive"));
            }
        }
        reals.push(("crossbar", self.crossbar.default_power_mw));
        reals.push(("crossbar", self.crossbar.area_um2));
        reals.extend(self.crossbar.power_mw.values().map(|&v| ("crossbar", v)));
        for (n, v) in reals {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{n} constants must be strictly positive, got {v}"));
            }
        }
        Ok(())
    }

    /// Cells (and bitlines) per weight in each crossbar of the pair.
    pub fn cells_per_weight(&self, weight_bits: u8) -> usize {
        (weight_bits as usize).div_ceil(self.cell_bits as usize)
    }

    pub fn channels_per_ipu(&self, weight_bits: u8) -> usize {
        (self.crossbar_cols / self.cells_per_weight(weight_bits)).max(1)
    }

    /// Time the shared ADC spends on one output channel per iteration.
    pub fn channel_slot_ns(&self, weight_bits: u8) -> f64 {
        self.cells_per_weight(weight_bits) as f64 / self.adc_hz * 1e9
    }

    pub fn ipus_per_tile(&self) -> usize {
        self.ipus_per_ima * self.imas_per_tile
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: HwConfig = serde_json::from_str(text).map_err(|e| Error::json("<config>", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: HwConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
