use thiserror::Error;

/// Errors raised by the estimation toolkit.
#[derive(Debug, Error)]
pub enum GestError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid trajectory `{id}`: {reason}")]
    InvalidTrajectory { id: String, reason: String },

    #[error("cohort parse error at line {line}, field `{field}`: {reason}")]
    Parse {
        line: usize,
        field: String,
        reason: String,
    },

    #[error("cohort is empty")]
    EmptyCohort,

    #[error(
        "no treatment initiations in the cohort: the initiation-rate MLE is on the boundary xi -> 0"
    )]
    NoEvents,

    #[error("{0} has no closed form for X_psi; use x_ode instead")]
    Unsupported(String),

    #[error("ODE integration failed on segment [{a}, {b}]: {reason}")]
    Ode { a: f64, b: f64, reason: String },

    #[error("no convergence after {iterations} iterations (residual max-norm {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("no almost-zero of the estimating equations found ({} residual evaluations recorded)", trace.len())]
    NoRoot { trace: Vec<(f64, f64)> },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, GestError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(GestError::Domain(msg.into()))
}
