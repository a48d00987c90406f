use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("no sign change on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("not converged after {0} iterations")]
    MaxIter(usize),
    #[error("rate must be positive, got {0}")]
    BadRate(f64),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam {
        name: &'static str,
        reason: &'static str,
    },
    #[error("outside domain: {0}")]
    Domain(&'static str),
    #[error("bad configuration: {0}")]
    BadConfig(&'static str),
    #[error("grid spacing {spacing} is coarser than {limit}")]
    GridTooCoarse { spacing: f64, limit: f64 },
    #[error("insufficient curve: {0}")]
    InsufficientCurve(&'static str),
}
