use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("site {site} outside 1..={len}")]
    SiteOutOfRange { site: usize, len: usize },
    #[error("operation requires periodic boundary")]
    NotPeriodic,
    #[error("operation requires open boundary")]
    NotOpen,
    #[error("QR iteration did not converge after {sweeps} sweeps (dimension {dim})")]
    NoConvergence { sweeps: usize, dim: usize },
    #[error("zero vector")]
    ZeroVector,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("input vectors not orthonormal (deviation {0:.3e})")]
    NotOrthonormal(f64),
    #[error("ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }

    /// True for failures caused by the input description rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidModel(_)
                | Error::SiteOutOfRange { .. }
                | Error::NotPeriodic
                | Error::NotOpen
                | Error::InvalidArgument(_)
                | Error::Config { .. }
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
