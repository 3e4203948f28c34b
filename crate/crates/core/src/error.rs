use thiserror::Error;

/// Errors produced by the simulation and verification toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("truncation error: K = {k} leaves tail {tail:.3e} above {limit:.3e}")]
    Truncation { k: usize, tail: f64, limit: f64 },

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("covariance not positive definite: pivot {index} = {value:.6e} after jitter {jitter:.1e}")]
    NotPositiveDefinite { index: usize, value: f64, jitter: f64 },

    #[error("circulant embedding failed: eigenvalue {eigenvalue:.6e} (max {max:.6e}); use the cholesky method")]
    EmbeddingFailure { eigenvalue: f64, max: f64 },

    #[error("index coverage: need innovations over [{need_lo}, {need_hi}], have [{have_lo}, {have_hi}]")]
    Coverage {
        need_lo: i64,
        need_hi: i64,
        have_lo: i64,
        have_hi: i64,
    },

    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("wrong branch: {0}")]
    WrongBranch(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
