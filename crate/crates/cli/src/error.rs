use std::fmt;
use std::path::Path;

use puf_noise::Error;

/// Failure of a subcommand, carrying its exit code class.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration (exit 1).
    Usage(String),
    /// Unreadable or inconsistent input data (exit 2).
    Data(String),
    /// Estimation or optimization failed numerically (exit 3).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        CliError::Usage(msg.to_string())
    }

    /// Library error raised while processing input data.
    pub fn data(e: Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }

    /// Library error raised while validating arguments.
    pub fn arg(e: Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn in_file(self, path: &Path) -> Self {
        let p = path.display();
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{p}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{p}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{p}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
