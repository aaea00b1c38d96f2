use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("incompatible sketches: {0}")]
    IncompatibleSketch(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("encode error: {0}")]
    Encode(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("index {index} out of range for {len} slots")]
    IndexOutOfRange { index: usize, len: usize },

    #[error(transparent)]
    Estimator(#[from] EstimatorError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Failure modes of the closed-form estimators.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EstimatorError {
    #[error("{estimator}: undefined ({reason})")]
    Undefined {
        estimator: &'static str,
        reason: String,
    },

    /// `d + f1^2 / (2 f2)` with `f2 = 0`.
    #[error("chao: f2 = 0, estimator blows up")]
    BlowUp,

    /// Every sampled element is a singleton, so `d - f1 = 0`.
    #[error("{estimator}: degenerate sample, every element is a singleton")]
    DegenerateSample { estimator: &'static str },

    #[error("{estimator}: sample coverage is zero (f1 >= n)")]
    CoverageZero { estimator: &'static str },

    /// The resample holds no singletons; retry with another resample seed.
    #[error("{estimator}: resample has no singletons")]
    ResampleDegenerate { estimator: &'static str },
}

impl EstimatorError {
    /// Short token written into report rows in place of a value.
    pub fn token(&self) -> &'static str {
        match self {
            EstimatorError::Undefined { .. } => "ERR:undefined",
            EstimatorError::BlowUp => "ERR:blow-up",
            EstimatorError::DegenerateSample { .. } => "ERR:degenerate-sample",
            EstimatorError::CoverageZero { .. } => "ERR:coverage-zero",
            EstimatorError::ResampleDegenerate { .. } => "ERR:resample-degenerate",
        }
    }

    pub(crate) fn undefined(estimator: &'static str, reason: impl fmt::Display) -> Self {
        EstimatorError::Undefined {
            estimator,
            reason: reason.to_string(),
        }
    }
}
