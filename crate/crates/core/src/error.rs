use thiserror::Error;

use crate::grid::LevelIndex;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by grid construction, solves, plan evaluation and studies.
///
/// Cloneable so a failed solve can be shared through the grid cache.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("direction index {index} out of range for dimension {dim}")]
    DirectionOutOfRange { index: usize, dim: usize },

    #[error("point coordinate {index} = {value} lies outside [0, 1]")]
    PointOutsideCube { index: usize, value: f64 },

    #[error("degenerate grid {0}: every level must be at least 1")]
    DegenerateGrid(LevelIndex),

    #[error("value array has length {got}, grid {level} needs {expected}")]
    ValueLength {
        level: LevelIndex,
        expected: usize,
        got: usize,
    },

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("solve failed on grid {level}: {source}")]
    AtLevel {
        level: LevelIndex,
        #[source]
        source: Box<Error>,
    },

    #[error("node budget exceeded at n = {n}: {projected} projected unique nodes > budget {budget}")]
    BudgetExceeded { n: u32, projected: u128, budget: u128 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed grid file: {0}")]
    Format(String),
}

impl Error {
    pub fn at_level(self, level: &LevelIndex) -> Self {
        Error::AtLevel {
            level: level.clone(),
            source: Box::new(self),
        }
    }

    /// Strips level annotations to reach the underlying cause.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtLevel { source, .. } => source.root(),
            other => other,
        }
    }
}
