//! Error channel for the command-line layer.
//!
//! Two failure classes map onto the process exit codes: validation problems
//! (bad config, unreadable files, missing prerequisite artifacts) exit 1 and
//! numerical failures (overflow, singular information, a line search that
//! gave up) exit 2. Success exits 0 even when a fit merely failed to
//! converge — that is a reported diagnostic, not an error.

use cbmr_core::error::CoreError;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "{msg}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Invalid(_) => CliError::Validation(format!("{e}")),
            _ => CliError::Numerical(format!("{e}")),
        }
    }
}

pub fn validation(msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{msg}"))
}

pub fn missing_artifact(path: &std::path::Path, produced_by: &str) -> CliError {
    CliError::Validation(format!(
        "missing prerequisite artifact {}: run `cbmr {produced_by}` first",
        path.display()
    ))
}
