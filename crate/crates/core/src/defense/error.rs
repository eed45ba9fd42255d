use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DefenseError {
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("probability {0} outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("not a probability vector: {0}")]
    NotAProbabilityVector(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("Monte-Carlo calibration did not converge after {steps} bisection steps")]
    NonConvergence { steps: usize },
}
