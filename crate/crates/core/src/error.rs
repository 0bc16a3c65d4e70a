use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("time step {dt} violates the CFL limit {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("surface not admissible: {0}")]
    NotAdmissible(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("corrector right-hand side has mean {mean:e} (relative {relative:e}, tolerance {tol:e})")]
    Incompatible { mean: f64, relative: f64, tol: f64 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("dump format: {0}")]
    Format(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
