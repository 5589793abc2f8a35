use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("problem data contains NaN or infinite entries")]
    NonFiniteData,
    #[error("numerical breakdown: {0}")]
    Numerical(String),
}
