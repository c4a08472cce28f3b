//! Bit-serial MAC execution with ReLU bypass and adaptive approximation,
//! plus reduction telemetry.

pub mod mac;
pub mod run;
pub mod stats;

pub use mac::{
    accu_trajectory, mac_bitserial, oracle_remaining, partial_results, MacTrace, Termination,
    TerminationPolicy,
};
pub use run::{baseline_traces, infer_reduced, LayerTrace, ReducedOutput, ReducedRunner};
pub use stats::{merge_runs, reduction_report, LayerRunStats, ReductionReport};
