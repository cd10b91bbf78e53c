use thiserror::Error;

/// Errors raised by meshes, solvers and time steppers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular system: zero pivot at row {row}")]
    SingularSystem { row: usize },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("blow-up at step {step}: max |T| = {max_abs:e} (time step likely violates the CFL bound)")]
    BlowUp { step: usize, max_abs: f64 },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("relative error undefined: reference norm is zero")]
    UndefinedError,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
