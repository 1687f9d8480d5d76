//! Error type shared by every module.

use thiserror::Error;

/// Failure modes reported by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate direction: {0}")]
    DegenerateDirection(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("off-shell amplitude request: |p_out| = {p_out}, |p_in| = {p_in}")]
    OffShell { p_out: f64, p_in: f64 },

    #[error("quadrature not converged: estimate {estimate:e}, error bound {error_bound:e}")]
    NotConverged { estimate: f64, error_bound: f64 },

    #[error("partial-wave truncation error {relative:.3e} exceeds 1% at k = {k}")]
    Truncation { k: f64, relative: f64 },

    #[error("grid or table mismatch: {0}")]
    Mismatch(String),

    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("majorant violated: {0}")]
    MajorantViolation(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },

    #[error("checksum mismatch: header {expected}, payload {found}")]
    ChecksumMismatch { expected: String, found: String },

    #[error("container format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
