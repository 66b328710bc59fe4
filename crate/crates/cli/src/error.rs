use std::fmt;
use std::path::PathBuf;

use trustdrift::Error;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag values.
    Usage(String),
    /// The JSON config file could not be read or parsed.
    Config { path: PathBuf, message: String },
    /// The input data file could not be read or failed validation.
    Input { path: PathBuf, source: Error },
    Core(Error),
}

impl CliError {
    /// 1 usage, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::Input { .. } => 2,
            CliError::Core(Error::Config(_)) => 1,
            CliError::Core(e) if e.is_data_error() => 2,
            CliError::Core(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Config { path, message } => write!(f, "{}: {message}", path.display()),
            CliError::Input { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}
