//! Command-line pipeline: `solve`, `analyze` and `perturb` driven by a TOML
//! run configuration.

pub mod commands;
pub mod config;
pub mod expr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing or unreadable artifact {path}: {detail}")]
    Artifact { path: String, detail: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] bangbang::Error),
}

/// Process exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// The optimizer stopped before reaching the gap tolerance.
    NotConverged,
    /// A verification threshold was missed.
    ChecksFailed,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::NotConverged => 2,
            Outcome::ChecksFailed => 3,
        }
    }
}

/// Exit code for errors of any kind.
pub const ERROR_CODE: u8 = 1;
