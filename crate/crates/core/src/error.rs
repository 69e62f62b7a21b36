use thiserror::Error;

/// Errors raised by the simulator and its analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid pulse: {0}")]
    InvalidPulse(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("step-size failure at t = {t} ns: {what} (excess {excess:.3e})")]
    StepSize { t: f64, what: &'static str, excess: f64 },

    #[error("sampling failure: {0}")]
    Sampling(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("fit did not converge after {evaluations} evaluations")]
    NonConvergence { evaluations: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::StepSize { .. } | Error::Sampling(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
