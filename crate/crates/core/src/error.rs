use thiserror::Error;

/// Errors raised by the solvers, diagnostics and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("time step violates stability limit: {0}")]
    Cfl(String),

    #[error("exchange quantum {epsilon} is not an integer multiple of the cell width {h}")]
    Misaligned { epsilon: f64, h: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical abort at t = {t}: {detail}")]
    NumericalAbort { t: f64, detail: String },

    #[error("config error in `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        name,
        reason: reason.into(),
    }
}
