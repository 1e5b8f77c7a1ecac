use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The diffusion coefficient may lose uniform ellipticity.
    #[error("coefficient is not uniformly elliptic: lower bound {bound} <= 0")]
    NonElliptic { bound: f64 },

    #[error("non-positive diffusion coefficient {value} on triangle {triangle}")]
    NonPositiveCoefficient { triangle: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A pivot of a Cholesky factorization was not positive.
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("linear solve residual {residual:e} above tolerance {tol:e}")]
    LinearSolve { residual: f64, tol: f64 },

    #[error("Newton did not converge after {iters} iterations (residual {residual:e})")]
    NewtonDiverged { iters: usize, residual: f64 },

    #[error("Newton line search stalled at iteration {iter} (residual {residual:e})")]
    LineSearchStalled { iter: usize, residual: f64 },

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("iteration {iter}: {source}")]
    Iteration {
        iter: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value in {what} at iteration {iter}")]
    NonFinite { what: &'static str, iter: usize },

    #[error("need at least {needed} full-gradient records, got {got}")]
    InsufficientRecords { needed: usize, got: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("cannot write {path}: {source}")]
    Output {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_sample(self, index: usize) -> Self {
        Error::Sample {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_iteration(self, iter: usize) -> Self {
        Error::Iteration {
            iter,
            source: Box::new(self),
        }
    }
}
