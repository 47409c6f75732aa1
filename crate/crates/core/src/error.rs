use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("degenerate spectrum: gap {gap:e} below tolerance {tol:e}")]
    DegenerateSpectrum { gap: f64, tol: f64 },

    #[error("degenerate trial function: {0}")]
    DegenerateTrial(String),

    #[error("no convergence after {iterations} iterations (last change {last_change:e})")]
    Convergence { iterations: usize, last_change: f64 },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::Schema(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::Assumption(_) => 3,
            Error::Resource(_)
            | Error::Numeric(_)
            | Error::DegenerateSpectrum { .. }
            | Error::DegenerateTrial(_)
            | Error::Convergence { .. }
            | Error::Divergence(_) => 4,
        }
    }

    /// Short machine-readable kind tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Schema(_) => "schema",
            Error::Assumption(_) => "assumption",
            Error::Resource(_) => "resource",
            Error::Numeric(_) => "numeric",
            Error::DegenerateSpectrum { .. } => "degenerate_spectrum",
            Error::DegenerateTrial(_) => "degenerate_trial",
            Error::Convergence { .. } => "convergence",
            Error::Divergence(_) => "divergence",
            Error::Io(_) => "io",
            Error::Json(_) => "schema",
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
