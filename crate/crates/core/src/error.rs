use thiserror::Error;

use crate::binpoly::VarId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("assignment is missing variables {0:?}")]
    MissingVariables(Vec<VarId>),

    #[error("value {value} outside domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("invalid encoding: {0}")]
    InvalidEncoding(String),

    #[error("expected {expected} input features, got {found}")]
    FeatureCount { expected: usize, found: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("input {value} of feature {feature} falls outside the stored normalization bounds")]
    OutOfRange { feature: usize, value: f64 },

    #[error("sample count underflow: removing {removing} from {present}")]
    CountUnderflow { present: u64, removing: u64 },

    #[error("brute force limited to {max} variables, problem has {found}")]
    TooManyVariables { found: usize, max: usize },

    #[error("gradient descent diverged at step {step}")]
    Diverged { step: usize },

    #[error("R-squared undefined for zero-variance targets")]
    ZeroVariance,

    #[error("format version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("state digest mismatch (file truncated or corrupted)")]
    DigestMismatch,

    #[error("malformed file: {0}")]
    Format(String),

    #[error("unknown solver '{0}'")]
    UnknownSolver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
