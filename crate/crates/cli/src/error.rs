use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Invalid or inconsistent setting, tagged with the offending key.
    Config {
        key: String,
        message: String,
    },
    Io {
        path: PathBuf,
        message: String,
    },
    /// At least one verification check failed.
    Verification(usize),
}

impl CliError {
    pub fn config(key: &str, message: impl fmt::Display) -> Self {
        CliError::Config {
            key: key.to_string(),
            message: message.to_string(),
        }
    }

    pub fn io(path: &Path, message: impl fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config { .. } => ExitCode::from(1),
            CliError::Io { .. } => ExitCode::from(2),
            CliError::Verification(_) => ExitCode::from(3),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { key, message } => write!(f, "config error in `{key}`: {message}"),
            CliError::Io { path, message } => {
                write!(f, "I/O error on {}: {message}", path.display())
            }
            CliError::Verification(n) => {
                write!(f, "verification failed: {n} check(s) did not pass")
            }
        }
    }
}

/// Attaches a config key to a library error.
pub trait KeyContext<T> {
    fn key(self, key: &str) -> Result<T, CliError>;
}

impl<T> KeyContext<T> for merged_diffusion::Result<T> {
    fn key(self, key: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::config(key, e))
    }
}
