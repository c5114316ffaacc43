use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("matrix is not positive semi-definite (factorization failed with jitter {jitter:.3e})")]
    NotPsd { jitter: f64 },
    #[error("column {column} has (near) zero norm")]
    ZeroColumn { column: usize },
    #[error("linear system is numerically singular")]
    SingularSystem,
    #[error("policy diverged: |theta| component reached {magnitude:.3e}")]
    DivergedPolicy { magnitude: f64 },
    #[error("state became non-finite")]
    NonFinite,
    #[error("empty or invalid range for {name}: [{low}, {high}]")]
    BadRange { name: String, low: f64, high: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}
