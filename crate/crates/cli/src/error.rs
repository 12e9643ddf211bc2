use std::path::PathBuf;

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or unusable input files (exit 2).
    #[error("{0}")]
    Usage(String),
    /// A fit or detection step did not succeed (exit 3).
    #[error("{0}")]
    NonConvergence(String),
    /// A configuration or model invariant does not hold (exit 4).
    #[error("{0}")]
    Invariant(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<emech_core::Error> for CliError {
    fn from(e: emech_core::Error) -> Self {
        use emech_core::Error as E;
        match e {
            E::Setup(_) => CliError::Usage(e.to_string()),
            E::FeatureNotFound(_) | E::Singular => CliError::NonConvergence(e.to_string()),
            _ => CliError::Invariant(e.to_string()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
