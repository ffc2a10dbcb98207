use std::fmt;

/// Failure of a subcommand, classified by the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, arguments or input data (exit 2).
    Validation(String),
    /// Training or a numerical check failed (exit 3).
    Numerical(String),
    /// Anything else, including I/O (exit 1).
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Other(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<poselift::Error> for CliError {
    fn from(e: poselift::Error) -> Self {
        use poselift::Error as E;
        match e {
            E::InvalidInput(_) | E::DegenerateGeometry(_) | E::Format { .. } => CliError::Validation(e.to_string()),
            E::NonFinite { .. } => CliError::Numerical(e.to_string()),
            E::Io { .. } | E::ContractViolation(_) => CliError::Other(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Other(format!("{}: {e}", path.display()))
}
