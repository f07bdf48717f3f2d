use thiserror::Error;

/// Errors raised by model construction, formula evaluation and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown letter {letter} (alphabet size {size})")]
    UnknownLetter { letter: usize, size: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("projection chain is not strictly decreasing at level {0}")]
    ChainNotDecreasing(usize),

    #[error("letters {i} and {j} neither overlap exactly nor are disjoint on level {level}")]
    OverlapViolation { level: usize, i: usize, j: usize },

    #[error("sponge is not good: {0}")]
    NotGoodSponge(String),

    #[error("horizon exhausted: need {needed} terms, have {available}")]
    HorizonExhausted { needed: usize, available: usize },

    #[error("level {r} out of range 1..={s}")]
    LevelOutOfRange { r: usize, s: usize },

    #[error("degenerate measure: H(W) = {0} <= 0")]
    Degenerate(f64),

    #[error("unequal linear parts: letters {0} and {1}")]
    UnequalLinearParts(usize, usize),

    #[error("subcritical survival vector: sum of survival probabilities {0} <= 1")]
    Subcritical(f64),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("empty set: {0}")]
    EmptySet(String),
}

pub type Result<T> = std::result::Result<T, Error>;
