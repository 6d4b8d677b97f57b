use std::path::PathBuf;

/// Errors produced anywhere in the linearization toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid case: {0}")]
    Validation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "power flow did not converge in {iterations} iterations (max mismatch {mismatch:.3e} p.u.)"
    )]
    NonConvergence { iterations: usize, mismatch: f64 },

    #[error("singular Jacobian at iteration {iteration} (close to voltage collapse?)")]
    SingularJacobian { iteration: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("matrix is ill-conditioned: cond = {cond:.3e} exceeds {threshold:.1e}")]
    IllConditioned { cond: f64, threshold: f64 },

    #[error(
        "NIPALS inner iteration did not converge for component {component} within {max_iter} steps"
    )]
    NipalsNonConvergence { component: usize, max_iter: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("label mismatch: {0}")]
    LabelMismatch(String),

    #[error("scenario generation failed: {failed} of {draws} draws did not converge (last failing draw index {last_index})")]
    Generation {
        failed: usize,
        draws: usize,
        last_index: usize,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the numbers rather than by the inputs' shape
    /// or the file system.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::SingularJacobian { .. }
                | Error::Singular(_)
                | Error::IllConditioned { .. }
                | Error::NipalsNonConvergence { .. }
                | Error::Numerical(_)
                | Error::DegenerateData(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
