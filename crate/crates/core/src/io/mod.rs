//! Configuration, run orchestration and persistence of fields and reports.

mod compare;
mod config;
mod field_csv;
mod report;
mod run;

use std::path::PathBuf;

use thiserror::Error;

use crate::grid::GridError;

pub use compare::{compare_fields, GapReport};
pub use config::{load_config, CheckConfig, GridConfig, LatticeConfig, RunConfig, SimulationConfig};
pub use field_csv::{read_field, read_field_from, write_field, write_field_to};
pub use report::{read_report, write_report, Command, Metrics, Refinement, RunReport, Suite};
pub use run::{run, RunError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("incompatible fields: {0}")]
    Incompatible(String),
    #[error("report: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Stream(#[from] std::io::Error),
}
