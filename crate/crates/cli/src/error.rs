use std::path::PathBuf;

use thiserror::Error;

/// Exit status for bad configuration, input data or arguments.
pub const EXIT_USAGE: u8 = 2;
/// Exit status for numerical failures and output errors during a run.
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Data(_) => EXIT_USAGE,
            Self::Numerical(_) | Self::Output { .. } => EXIT_RUNTIME,
        }
    }
}

impl From<trigkernel::Error> for CliError {
    fn from(e: trigkernel::Error) -> Self {
        match e {
            // invalid parameters can only come from the config
            trigkernel::Error::Input(_) | trigkernel::Error::Dimension { .. } => Self::Config(e.to_string()),
            trigkernel::Error::Numerical(m) => Self::Numerical(m),
        }
    }
}

/// Problems reading a CSV dataset. Line numbers count the header as line 1.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },

    #[error("{path}: no column named {column:?}")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: line {line}, column {column:?}: cannot parse {value:?} as a number")]
    Parse { path: PathBuf, line: u64, column: String, value: String },

    #[error("{path}: line {line}, column {column:?}: value {value} is not finite")]
    NotFinite { path: PathBuf, line: u64, column: String, value: String },

    #[error("{path}: line {line} has {got} fields, expected {expected}")]
    Ragged { path: PathBuf, line: u64, expected: usize, got: usize },

    #[error("{path}: no data rows")]
    Empty { path: PathBuf },
}
