use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("generator is not Hermitian (‖H − H†‖_F = {0:.3e})")]
    NotHermitian(f64),

    #[error("truncation guard failed: doubling M changed low-level propagation by {drift:.3e} (limit {limit:.1e})")]
    Truncation { drift: f64, limit: f64 },

    #[error("motional level {m} is within the guard margin of truncation M = {truncation}")]
    GuardMargin { m: usize, truncation: usize },

    #[error("average-Hamiltonian expansion invalid: {0}")]
    AvhValidity(String),

    #[error("solver did not converge: {message} (best residual {residual:.3e})")]
    NoConvergence { message: String, residual: f64 },

    #[error("pulse file: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
