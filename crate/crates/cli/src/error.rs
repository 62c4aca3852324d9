use gest_core::GestError;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{0}")]
    Core(#[from] GestError),

    #[error("{failed} of {total} replications failed (more than 10%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 0 success, 2 input error, 3 solver non-convergence, 4 singularity.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e {
                GestError::NoConvergence { .. }
                | GestError::NoRoot { .. }
                | GestError::Ode { .. } => 3,
                GestError::Singular(_) => 4,
                _ => 2,
            },
            CliError::TooManyFailures { .. } => 3,
            _ => 2,
        }
    }

    /// Extra lines explaining a solver failure.
    pub fn diagnostics(&self) -> Vec<String> {
        match self {
            CliError::Core(GestError::NoConvergence { last, .. }) => {
                vec![format!("last iterate: {last:?}")]
            }
            CliError::Core(GestError::NoRoot { trace }) => trace
                .iter()
                .map(|(psi, r)| format!("psi = {psi}: residual {r}"))
                .collect(),
            _ => Vec::new(),
        }
    }
}

pub(crate) fn io_context(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}
