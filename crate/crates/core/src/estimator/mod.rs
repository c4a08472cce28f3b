//! Offline construction of the Max/Min estimates: digit statistics,
//! worst-case and statistical per-position bounds, and the cumulative table.

pub mod bounds;
pub mod lut;
pub mod probs;

pub use bounds::{per_iteration_bounds, BoundsMode, KernelSums};
pub use lut::{build_lut, lut_row, EstimateLut, LayerLut, LutRow};
pub use probs::{
    extract_probabilities, BitProbability, LayerBitProbability, PositionProbs, ProbStat,
};
