use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported channel: {0}")]
    UnsupportedChannel(String),

    /// The linear system (or the analytic running) sits on a pole at this cutoff.
    #[error("pole condition at cutoff {cutoff}: {detail}")]
    Pole { cutoff: f64, detail: String },

    #[error("ill-conditioned solve (condition number {condition:.3e}): {detail}")]
    IllConditioned { condition: f64, detail: String },

    #[error("grid not converged: relative change {relative_change:.3e} on refinement (condition number {condition:.3e})")]
    NotConverged {
        relative_change: f64,
        condition: f64,
    },

    #[error("no root in the selected branch: {0}")]
    BranchExhausted(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular {size}x{size} fit system (determinant {determinant:.3e})")]
    SingularFit { size: usize, determinant: f64 },

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("fit window too small: {0}")]
    WindowTooSmall(String),
}

pub type Result<T> = std::result::Result<T, Error>;
