use thiserror::Error;

use crate::lp::LpError;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid model: {0}")]
    Validation(String),

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("observation {obs} is impossible after action {action} (probability {prob:e})")]
    ImpossibleObservation { action: usize, obs: usize, prob: f64 },

    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),

    #[error("candidate count {count} exceeds the configured cap of {cap}")]
    CandidateCap { count: usize, cap: usize },

    #[error("vector {index} carries no action tag")]
    MissingAction { index: usize },

    #[error("stage {stage} vector {vector} has a dangling witness for observation {obs}")]
    DanglingWitness { stage: usize, vector: usize, obs: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid interpolation weights: {0}")]
    InvalidWeights(String),

    #[error("controller has not been evaluated")]
    Unevaluated,

    #[error("invalid controller: {0}")]
    InvalidController(String),

    #[error("softmax inner product {value} is not positive; shift rewards first")]
    NonPositiveInner { value: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid maze: {0}")]
    InvalidMaze(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("linear system is singular")]
    Singular,
}

pub type Result<T> = std::result::Result<T, Error>;
