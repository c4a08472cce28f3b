use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the fixed-point core, model loading and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fixed-point spec: {0}")]
    InvalidSpec(String),

    #[error("bit position {position} out of range for {bits}-bit value")]
    PositionOutOfRange { position: u32, bits: u8 },

    #[error("value {value} outside representable range [{min}, {max}]")]
    ValueOutOfRange { value: i64, min: i64, max: i64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("missing tensor file {0}")]
    MissingTensor(PathBuf),

    #[error("missing manifest {0}")]
    MissingManifest(PathBuf),

    #[error("weight out of range in layer {layer}: {value} not in [{min}, {max}]")]
    WeightOutOfRange {
        layer: usize,
        value: i64,
        min: i64,
        max: i64,
    },

    #[error("unknown layer kind `{0}`")]
    UnknownLayerKind(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("bad magic number in {path}: expected {expected:#010x}, got {got:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        got: u32,
    },

    #[error("truncated file {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("calibration set needs at least {needed} images, got {got}")]
    NotEnoughCalibration { needed: usize, got: usize },

    #[error("missing estimate table for layer {0}")]
    MissingLut(usize),

    #[error("estimate table row has {got} entries, expected {expected}")]
    LutRowLength { expected: usize, got: usize },

    #[error("invalid termination policy: {0}")]
    InvalidPolicy(String),

    #[error("model does not fit: {0}")]
    DoesNotFit(String),

    #[error("invalid hardware config: {0}")]
    InvalidConfig(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
