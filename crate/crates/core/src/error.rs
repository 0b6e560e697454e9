use thiserror::Error;

/// Errors produced by the estimation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("need at least {need} studies, got {got}")]
    TooFewStudies { need: usize, got: usize },

    #[error("no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("{what} did not converge (error bound {bound:e})")]
    NoConvergence { what: &'static str, bound: f64 },

    #[error("flat likelihood: {0}")]
    FlatLikelihood(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
