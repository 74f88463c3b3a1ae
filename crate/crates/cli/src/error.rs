use std::path::PathBuf;

/// Failures surfaced by the command line, split by exit code: usage,
/// configuration and input problems exit with 2, runtime failures with 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read {}: {msg}", path.display())]
    Input { path: PathBuf, msg: String },
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Input { .. } => 2,
            CliError::Runtime(_) | CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
