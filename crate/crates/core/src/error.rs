use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid window [{start}, {end}] for a path with {len} nodes")]
    InvalidWindow { start: usize, end: usize, len: usize },
    #[error("invalid initial condition: {0}")]
    InvalidInitialCondition(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("internal error: {0}")]
    Internal(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by the command line front end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter(_)
            | Error::InvalidWindow { .. }
            | Error::InvalidInitialCondition(_)
            | Error::InvalidInput(_)
            | Error::ContractViolation(_)
            | Error::Resource(_) => ErrorClass::Config,
            Error::InsufficientData(_) | Error::NonConvergence { .. } | Error::Internal(_) => ErrorClass::Numerical,
            Error::Io(_) | Error::Csv(_) => ErrorClass::Io,
            Error::Json(e) if e.is_io() => ErrorClass::Io,
            Error::Json(_) => ErrorClass::Config,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
