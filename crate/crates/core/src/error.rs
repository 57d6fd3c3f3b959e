use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid number {text:?}: {reason}")]
    Number { text: String, reason: &'static str },

    #[error("asymmetric matrix: dist[{row}][{col}] != dist[{col}][{row}]")]
    Asymmetric { row: usize, col: usize },

    #[error("distance matrix must be {expected}x{expected}, found a row of length {found}")]
    Shape { expected: usize, found: usize },

    #[error("negative distance at ({row}, {col})")]
    NegativeDistance { row: usize, col: usize },

    #[error("zero distance between distinct points {row} and {col}")]
    ZeroDistance { row: usize, col: usize },

    #[error("nonzero diagonal entry at {0}")]
    NonzeroDiagonal(usize),

    #[error("duplicate point label {0:?}")]
    DuplicateLabel(String),

    #[error("unknown point label {0:?}")]
    UnknownLabel(String),

    #[error("point index {index} out of range for a space with {len} points")]
    PointOutOfRange { index: usize, len: usize },

    #[error("space has no points")]
    EmptySpace,

    #[error("exponent {0} must lie in (0, 1]")]
    ExponentRange(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("space is not a metric space ({0} triangle violations)")]
    NotMetric(usize),

    #[error("space is not an ultrametric: d({0},{2}) > max(d({0},{1}), d({1},{2}))")]
    NotUltrametric(usize, usize, usize),

    #[error("space is not uniformly discrete: {0}")]
    NotZeroOne(String),

    #[error("point positions do not reproduce the distance matrix under |x-y|^(1/p): {0}")]
    ExponentMismatch(String),

    #[error("molecule coefficients sum to {0}, not zero")]
    NotZeroSum(String),

    #[error("molecule support escapes the allowed point set (point {0})")]
    SupportEscapes(usize),

    #[error("exact enumeration budget exceeded: {points} points > budget {budget}")]
    BudgetExceeded { points: usize, budget: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors caused by malformed or out-of-contract inputs, as
    /// opposed to I/O failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
