use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular resolvent: lambda = {lambda} annihilates mode {mode}")]
    SingularResolvent { lambda: f64, mode: usize },

    #[error("grid alignment: {0}")]
    GridAlignment(String),

    #[error("well-posedness gate failed: gate value {value} is not < 1")]
    Wellposedness { value: f64 },

    #[error(
        "Picard iteration for the neutral term did not converge at t = {time} \
         after {iterations} iterations (last update {residual:e})"
    )]
    PicardDivergence {
        time: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite state at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of the time stepper itself, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::PicardDivergence { .. } | Error::NonFinite { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
