//! Experiment harness around `tracker_core`: configuration, the shared
//! train/evaluate pipeline, canned studies and report emission.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod systems;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training failed: {0}")]
    Training(#[source] tracker_core::Error),
    #[error(transparent)]
    Core(#[from] tracker_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for configuration and general errors, 2 for training failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Training(_) => 2,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}
