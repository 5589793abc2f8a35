use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("pair (A, C) is not detectable: mode at lambda = {re:.6} + {im:.6}i has rank deficit {deficit}")]
    NotDetectable { re: f64, im: f64, deficit: usize },
    #[error("synthesis infeasible: {0}")]
    Infeasible(String),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("equilibrium search failed: {0}")]
    Equilibrium(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<traffic_sdp::SolverError> for Error {
    fn from(e: traffic_sdp::SolverError) -> Self {
        Error::Numerical(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { what, expected, got });
    }
    Ok(())
}
