use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("identification failed: {0}")]
    Identification(String),

    #[error("model assembly failed: {0}")]
    Assembly(String),

    #[error("system is not observable for this sensor layout (rank {rank} of {dim})")]
    NotObservable { rank: usize, dim: usize },

    #[error("normal matrix is singular ({0}); try a larger arrival-cost weight lambda")]
    SingularNormalMatrix(String),

    #[error("QP did not converge in {iterations} iterations (max violation {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("step index must advance by one: expected {expected}, got {got}")]
    StepOrder { expected: usize, got: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Identification(_)
                | Error::NotObservable { .. }
                | Error::SingularNormalMatrix(_)
                | Error::NonConvergence { .. }
        )
    }
}
