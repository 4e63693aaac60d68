//! Batch front end for the `gadp` toolkit: problem files in, CSV, JSON and
//! polynomial text out.

pub mod artifacts;
pub mod commands;
pub mod problem;

use thiserror::Error;

pub use commands::{
    cmd_compare, cmd_feasible, cmd_offline, cmd_online, cmd_simulate, run_feasible, run_offline,
    run_online_problem, OfflineResult, OnlineResult,
};
pub use problem::{Overrides, Problem, ProblemFile};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Timeout(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Timeout(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
