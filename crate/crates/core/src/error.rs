use thiserror::Error;

use crate::grid::IntervalId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid depth {depth} outside supported range [{min}, {max}]")]
    Depth { depth: u32, min: u32, max: u32 },

    #[error("interval {0} is not addressable on a grid of depth {1}")]
    Addressing(IntervalId, u32),

    #[error("interval {0} has no {1} on a grid of depth {2}")]
    NoChildren(IntervalId, &'static str, u32),

    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },

    #[error("non-finite value at cell {0}")]
    NonFinite(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("power exponent {0} <= -1 is not integrable")]
    NonIntegrable(f64),

    #[error("resource guard: {0}")]
    Resource(String),

    #[error("power iteration did not converge after {iterations} iterations (relative residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
