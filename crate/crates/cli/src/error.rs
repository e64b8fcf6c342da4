//! CLI error type and its exit-code contract.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration problem,
//! 3 numerical failure (solver breakdown, non-finite state, ...).

use langevin_deviations::error::Error as CoreError;

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(msg) => write!(f, "io error: {msg}"),
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidConfig(_)
            | CoreError::Incompatible(_)
            | CoreError::Parse(_)
            | CoreError::NotSupported(_) => CliError::Config(e.to_string()),
            CoreError::NonPositiveDamping { .. }
            | CoreError::NonFinite(_)
            | CoreError::SingularDiffusion { .. }
            | CoreError::SingularGramian(_)
            | CoreError::NonzeroStart(_)
            | CoreError::InsufficientData(_) => CliError::Numerical(e.to_string()),
            CoreError::Io(e) => CliError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
