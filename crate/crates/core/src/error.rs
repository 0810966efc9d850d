use thiserror::Error;

/// Errors raised by the simulators and the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("series did not reach tolerance {tol:e} within {terms} terms (tail bound {tail_bound:e})")]
    Convergence {
        terms: usize,
        tail_bound: f64,
        tol: f64,
    },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("numerical domain error: {0}")]
    Domain(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// Parameter errors are the caller's fault; everything else is a numerical failure.
    pub fn is_parameter(&self) -> bool {
        matches!(self, Error::Parameter(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
