//! Bit-serial CNN inference on ReRAM crossbars with runtime early
//! termination of MAC operations.
//!
//! Activations are fed to the crossbars one sign-magnitude digit per
//! iteration, most significant first. After each iteration the partial
//! accumulator is compared with precomputed bounds on what the remaining
//! iterations can still add. The MAC stops early when its ReLU output is
//! already known to be zero, or when the remaining contribution is small
//! relative to the accumulator.
//!
//! Modules:
//! - [`fixed`]: fixed-point specs, quantization and digit extraction
//! - [`net`]: layer descriptions, model and dataset loading, exact inference
//! - [`estimator`]: digit statistics and per-iteration bound tables
//! - [`engine`]: bit-serial MACs with termination and reduction statistics
//! - [`hwmodel`]: mapping, latency, energy and area of the accelerator
//! - [`zoo`]: reference networks and synthetic data

pub mod engine;
pub mod error;
pub mod estimator;
pub mod fixed;
pub mod hwmodel;
pub mod net;
pub mod zoo;

pub use error::{Error, Result};
pub use fixed::{FixedSpec, QTensor};
pub use net::NetworkModel;
