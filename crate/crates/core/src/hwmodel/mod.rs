//! Architectural model of a bit-serial ReRAM accelerator: mapping,
//! bitline arithmetic, latency, energy and area.

pub mod config;
pub mod cost;
pub mod crossbar;
pub mod inject;
pub mod mapping;

pub use config::{BusParams, CrossbarParams, HwConfig, LeakageScope, MemoryParams, UnitParams};
pub use cost::{
    area_of, compare, compare_with, count_events, energy_of, evaluate, evaluate_events,
    mean_events, simulate_timing, timing_of, AreaReport, Comparison, EnergyReport, HwReport,
    LayerEvents, LayerTiming, TimingReport,
};
pub use crossbar::{crossbar_mac_faithful, slice_count, slice_weight, WeightSlices};
pub use inject::inject_reduction;
pub use mapping::{map_network, IpuSlot, LayerMapping, MappingPlan};
