use std::path::PathBuf;

use spd_bci_core::Error as CoreError;
use spd_bci_nn::Error as NnError;

/// Pipeline failure, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Exit code 1.
    #[error("usage: {0}")]
    Usage(String),
    /// Exit code 1.
    #[error("config: {0}")]
    Config(String),
    /// Exit code 2.
    #[error("data: {0}")]
    Data(String),
    /// Exit code 3.
    #[error("numerical: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    /// Prefixes the message with the file it concerns.
    pub fn at(self, path: &std::path::Path) -> Self {
        let p = path.display();
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{p}: {m}")),
            CliError::Config(m) => CliError::Config(format!("{p}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{p}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{p}: {m}")),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let m = e.to_string();
        match e {
            CoreError::InvalidBand { .. } | CoreError::InvalidOrder(_) | CoreError::Rank { .. } | CoreError::InvalidParameter(_) => {
                CliError::Config(m)
            }
            CoreError::NonFinite(_) | CoreError::NearSingular { .. } => CliError::Numerical(m),
            _ => CliError::Data(m),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        let m = e.to_string();
        match e {
            NnError::InvalidParameter(_) => CliError::Config(m),
            NnError::Diverged { .. } | NnError::UndefinedMetric(_) => CliError::Numerical(m),
            _ => CliError::Data(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub(crate) fn io_at(path: &std::path::Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

pub(crate) fn missing(path: PathBuf, what: &str) -> CliError {
    CliError::Data(format!("{}: {what} not found", path.display()))
}

pub type CliResult<T> = Result<T, CliError>;
