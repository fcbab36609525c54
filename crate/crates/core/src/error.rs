use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("exponent p = {0} must lie strictly between 1 and infinity")]
    InvalidExponent(f64),

    #[error("dimension must be positive")]
    ZeroDimension,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("symmetric part of linear map is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotMonotoneLinear { min_eigenvalue: f64 },

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("sampled graph is empty")]
    EmptyGraph,

    #[error("sampled graph is not monotone: pair ({i}, {j}) has product {product:e}")]
    NonMonotoneGraph { i: usize, j: usize, product: f64 },

    #[error("regularization parameter must be positive, got {0}")]
    InvalidParameter(f64),

    #[error("solver did not converge after {iterations} iterations (best residual {residual:e}, tolerance {tol:e})")]
    SolverFailure {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("operator `{operator}` is multivalued at the evaluation point; a zero regularization parameter is not allowed there")]
    MultivaluedEndpoint { operator: String },

    #[error("operator `{operator}` does not support {what}")]
    Unsupported { operator: String, what: &'static str },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("linear program: {0}")]
    LinearProgram(String),
}

pub type Result<T> = std::result::Result<T, Error>;
