use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not square: row {row} has {len} entries, expected {n}")]
    NotSquare { row: usize, len: usize, n: usize },

    #[error("matrix is not symmetric at ({i}, {j}): {a_ij} != {a_ji}")]
    Asymmetric {
        i: usize,
        j: usize,
        a_ij: f64,
        a_ji: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("exhaustive enumeration is capped at n <= {cap} (requested n = {n})")]
    EnumerationCap { n: usize, cap: usize },

    #[error("n ≥ 6 required (got n = {0})")]
    TooSmall(usize),

    #[error("degenerate variance: sigma^2 = {0:e}")]
    DegenerateVariance(f64),

    #[error("degenerate square bias: E(Y' - Y'')^2 vanishes")]
    DegenerateSquareBias,

    #[error("inconsistent configuration: {0}")]
    InconsistentConfig(String),

    #[error("too few samples: need at least {min}, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error("parse error: {0}")]
    Parse(String),
}
