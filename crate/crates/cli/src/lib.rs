//! Library side of the `lrfim` binary: configuration, CSV output,
//! experiments and verification suites.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;
pub mod suites;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] lrfim_core::Error),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("{0}")]
    UnknownCommand(String),
    #[error("verification failed: {0}")]
    Failed(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Infeasible(_) => 2,
            CliError::UnknownCommand(_) => 64,
            _ => 1,
        }
    }
}
