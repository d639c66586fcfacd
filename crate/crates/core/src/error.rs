use thiserror::Error;

/// Errors produced by the numerical kernels, assembly, solvers and persistence.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("matrix is not positive definite: non-positive pivot at index {pivot}")]
    NotPositiveDefinite { pivot: usize },
    #[error("matrix is not symmetric: {0}")]
    NotSymmetric(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("right-hand side is zero")]
    ZeroRhs,
    #[error("solver did not converge after {iterations} iterations (max relative residual {max_residual:.3e})")]
    NotConverged { iterations: usize, max_residual: f64 },
    #[error("problem too large for dense path: {n} > {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("malformed artifact: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(op: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            op,
            expected,
            found,
        })
    }
}
