use thiserror::Error;

/// Errors raised by the valuation engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwingError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "moment matching impossible: sigma^2 = {sigma_sq} must exceed the jump variance 2f/alpha^2 = {jump_var}"
    )]
    MomentMatch { sigma_sq: f64, jump_var: f64 },

    #[error("no closed form available: {0}")]
    Unsupported(String),

    #[error("non-finite value {value} at t = {t}, z index {iz}, x1 index {ix1}, x2 index {ix2}")]
    NonFinite {
        value: f64,
        t: f64,
        iz: usize,
        ix1: usize,
        ix2: usize,
    },

    #[error("tridiagonal solver breakdown at row {0} (zero pivot)")]
    SolverBreakdown(usize),

    #[error("inadmissible policy: {0}")]
    InadmissiblePolicy(String),

    #[error("insufficient surfaces: {0}")]
    InsufficientSlices(String),

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),
}

pub type Result<T> = std::result::Result<T, SwingError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(SwingError::InvalidParameter(msg.into()))
}
