use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

/// Process exit status for usage and input errors.
pub const EXIT_USAGE: i32 = 1;
/// Process exit status when training produced a non-finite loss.
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),

    #[error("config {}: {msg}", path.display())]
    Config { path: PathBuf, msg: String },

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: clplu::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] clplu::Error),

    /// No grid cell finished. `numerical` is set when every cell hit a
    /// non-finite loss.
    #[error("every training run failed; first error: {first}")]
    AllRunsFailed { numerical: bool, first: String },
}

impl HarnessError {
    pub fn in_file(path: impl Into<PathBuf>) -> impl FnOnce(clplu::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::File { path, source }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    fn core(&self) -> Option<&clplu::Error> {
        match self {
            HarnessError::File { source, .. } | HarnessError::Core(source) => Some(source),
            _ => None,
        }
    }

    /// Whether the failure is a numerical abort rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, HarnessError::AllRunsFailed { numerical: true, .. })
            || matches!(self.core(), Some(clplu::Error::NonFiniteLoss { .. }))
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            EXIT_NUMERICAL
        } else {
            EXIT_USAGE
        }
    }
}
