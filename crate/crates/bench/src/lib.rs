//! Verification, benchmark sweeps and model predictions on top of
//! `slidefft-core`, shared by the `slidefft` binary and the acceptance tests.

pub mod commands;
pub mod options;
pub mod record;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    VerificationFailure,
    Usage,
    Infeasible,
}

impl Status {
    pub const fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::VerificationFailure => 1,
            Status::Usage => 2,
            Status::Infeasible => 3,
        }
    }
}

impl CliError {
    pub fn status(&self) -> Status {
        match self {
            CliError::Usage(_) => Status::Usage,
            CliError::Io(_) => Status::VerificationFailure,
        }
    }
}
