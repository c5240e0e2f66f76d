//! Run reports: the resolved config, metrics and written artifacts, as JSON.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::problem::AssumptionReport;

use super::compare::GapReport;
use super::config::RunConfig;
use super::IoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Oracle,
    Simulate,
    Check,
    Compare,
}

impl Command {
    pub const ALL: [Command; 5] = [Command::Solve, Command::Oracle, Command::Simulate, Command::Check, Command::Compare];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Oracle => "oracle",
            Command::Simulate => "simulate",
            Command::Check => "check",
            Command::Compare => "compare",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one `check` suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Quantities measured at the configured step and at the refined step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub dx: [f64; 2],
    pub sup_residual: [f64; 2],
    /// Residual sup over levels before the last tenth of the horizon.
    pub sup_residual_early: [f64; 2],
    pub lipschitz_x: [f64; 2],
    pub holder_t: [f64; 2],
    pub terminal_bound: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Metrics {
    pub value_at_probe: Option<f64>,
    pub pde_steps: Option<usize>,
    pub lattice_steps: Option<usize>,
    pub sup_residual: Option<f64>,
    pub sup_residual_early: Option<f64>,
    /// Residual sup per region, ordered CONT, I_INT, II_INT.
    pub residual_by_region: Option<[f64; 3]>,
    pub region_counts: Option<[usize; 3]>,
    pub oracle_gap: Option<GapReport>,
    pub dpp_residual: Option<f64>,
    pub isaacs_gap: Option<f64>,
    pub mc_estimate: Option<f64>,
    pub mc_stderr: Option<f64>,
    /// PDE value at the simulation start.
    pub mc_reference: Option<f64>,
    pub mc_capped_paths: Option<usize>,
    pub refinement: Option<Refinement>,
    pub value_bound: Option<f64>,
    pub assumptions: Option<AssumptionReport>,
    pub suites: Vec<Suite>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: Command,
    pub config: RunConfig,
    pub metrics: Metrics,
    /// Seconds; the only field that varies between identical runs.
    pub wall_time: f64,
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn suites_pass(&self) -> bool {
        self.metrics.suites.iter().all(|s| s.passed)
    }

    pub fn to_json(&self) -> Result<String, IoError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn write_report(report: &RunReport, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, report.to_json()? + "\n").map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

pub fn read_report(path: &Path) -> Result<RunReport, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    RunReport::from_json(&text)
}
