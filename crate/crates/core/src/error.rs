use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value in {field} at grid index {index:?}")]
    NonFinite { field: &'static str, index: Vec<usize> },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("metric not positive definite at grid index {index:?} (smallest eigenvalue ≈ {min_eigenvalue:.3e})")]
    NotPositiveDefinite { index: Vec<usize>, min_eigenvalue: f64 },

    #[error("blow-up at t = {t:.6e}: sup|h| = {sup:.6e} reached the limit 1/2")]
    BlowUp { t: f64, sup: f64 },

    #[error("CFL violation: {0}")]
    Cfl(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("malformed snapshot: {0}")]
    Format(String),

    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument { name, reason: reason.into() }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { key: key.into(), reason: reason.into() }
    }
}
