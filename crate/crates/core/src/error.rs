use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("hilbert dimension {dim} exceeds the configured maximum {max}")]
    DimensionOverflow { dim: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("index {index} out of range for size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid quantum state: {0}")]
    InvalidState(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("spectral density is negative ({value:.3e}) at ω = {omega}")]
    NegativeSpectralDensity { omega: f64, value: f64 },

    #[error("ω = {omega} lies outside the tabulated range [{min}, {max}]")]
    OutOfDomain { omega: f64, min: f64, max: f64 },

    #[error("coupling system is singular")]
    SingularSystem,

    #[error(
        "improved coupling solve produced negative c_k² for modes {modes:?} (values {values:?}); \
         the δ-kernel is not diagonally dominant, so the grid is too coarse or τ too small"
    )]
    NegativeCoupling { modes: Vec<usize>, values: Vec<f64> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fit did not converge: {0}")]
    FitFailed(String),

    #[error("failed to parse tabulated data at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
