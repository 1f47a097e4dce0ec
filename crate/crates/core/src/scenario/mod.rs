//! Scenario files, result tables and the commands behind the `radv` CLI.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::adversary::DpError;
use crate::game::GameError;
use crate::mass::MassError;
use crate::mdp::MdpError;
use crate::reference::RefError;

pub mod commands;
pub mod config;
pub mod table;

pub use commands::{run, Command, CommandOutput};
pub use config::{load_scenario, parse_scenario, Scenario};
pub use table::{format_real, Cell, Format, Metadata, ResultTable};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation error in {field}: {message}")]
    Validation { field: String, message: String },
    #[error("scenario has no {0} section")]
    Missing(&'static str),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Reference(#[from] RefError),
    #[error(transparent)]
    Mass(#[from] MassError),
    #[error("grid cell {cell}: {source}")]
    InCell {
        cell: String,
        #[source]
        source: Box<ScenarioError>,
    },
    #[error("table error: {0}")]
    Table(String),
    #[error("output error: {0}")]
    Output(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Parse, validation or I/O failure.
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
/// A verification command found a failing check.
pub const EXIT_CHECK_FAILED: i32 = 3;

impl ScenarioError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Dp(DpError::NonConvergence { .. })
            | ScenarioError::Mass(MassError::NoFixedPointFound { .. })
            | ScenarioError::Reference(RefError::Solver(MdpError::NonConvergence { .. })) => {
                EXIT_NUMERICAL
            }
            ScenarioError::InCell { source, .. } => source.exit_code(),
            _ => EXIT_INVALID,
        }
    }
}
