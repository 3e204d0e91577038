use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("polytope rejected: {0}")]
    Polytope(String),

    #[error("linear program failed: {0}")]
    Lp(#[from] crate::lp::LpError),

    #[error("quadratic program failed: {0}")]
    Qp(String),

    #[error("identity check failed: {what} (residual {residual:.3e})")]
    Identity { what: String, residual: f64 },

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("w = {0} lies outside the workload space")]
    InfeasibleFiber(f64),

    #[error("unsupported holding cost: {0}")]
    UnsupportedCost(String),

    #[error("uncontrollable workload: {0}")]
    Uncontrollable(String),

    #[error("path check failed at step {step}: {what} (residual {residual:.3e})")]
    Path { step: usize, what: String, residual: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
