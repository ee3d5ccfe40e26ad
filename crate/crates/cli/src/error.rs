use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const FAILED_ROWS: i32 = 1;
    pub const UNKNOWN_EXPERIMENT: i32 = 2;
    pub const INVALID_CONFIG: i32 = 3;
    pub const UNWRITABLE_OUTPUT: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot write {path}: {msg}")]
    Output { path: PathBuf, msg: String },

    #[error(transparent)]
    Core(#[from] bias_lab::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::UnknownExperiment(_) => exit::UNKNOWN_EXPERIMENT,
            CliError::Output { .. } => exit::UNWRITABLE_OUTPUT,
            CliError::Config(_) | CliError::Core(_) => exit::INVALID_CONFIG,
        }
    }

    pub(crate) fn output(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> Self {
        CliError::Output {
            path: path.into(),
            msg: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
