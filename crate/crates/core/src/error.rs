use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("trace mismatch: {0}")]
    TraceMismatch(String),
    #[error("trace too short: need {needed} samples, have {have}")]
    TooShort { needed: usize, have: usize },
    #[error("unstable time step: dt = {dt:e} s exceeds bound {bound:e} s")]
    UnstableStep { dt: f64, bound: f64 },
    #[error("steady state not reached: relative drift {drift:e} > {tolerance:e}")]
    NotSteady { drift: f64, tolerance: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
