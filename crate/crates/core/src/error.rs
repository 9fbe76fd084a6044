use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("grid too coarse: {nodes} nodes, need at least {min}")]
    GridTooCoarse { nodes: usize, min: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("invalid metric measure space: {0} violation(s)")]
    InvalidSpace(usize),
    #[error("marginal mass mismatch: {0} vs {1}")]
    MassMismatch(f64, f64),
    #[error("generator is disconnected")]
    Disconnected,
    #[error("detailed balance violated between states {0} and {1}")]
    DetailedBalance(usize, usize),
    #[error("solver did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
