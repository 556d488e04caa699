use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{family}: argument {value} is outside the domain")]
    Domain { family: String, value: f64 },

    #[error("length mismatch: {0} vs {1}")]
    ShapeMismatch(usize, usize),

    #[error("absolute continuity violated at index {index}: p = {p}, q = {q}")]
    AbsoluteContinuity { index: usize, p: f64, q: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("{operation} is not supported for {family}")]
    UnsupportedFamily {
        operation: &'static str,
        family: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("unknown divergence family `{0}`")]
    UnknownFamily(String),
}
