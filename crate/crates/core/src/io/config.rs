//! Run configuration: a strict TOML schema where every key has a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::grid::SpatialGrid;
use crate::hjbi::{pde_grid, SolverOptions, INTERIOR_FRACTION};
use crate::lattice::{default_lattice_steps, DecisionOrder};
use crate::problem::{canonical, ProblemSpec};

use super::IoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Registry name; ignored when `spec` is given.
    pub problem: String,
    /// Inline problem definition.
    pub spec: Option<ProblemSpec>,
    pub grid: GridConfig,
    pub lattice: LatticeConfig,
    pub simulation: SimulationConfig,
    pub solver: SolverOptions,
    pub check: CheckConfig,
    /// Value probe `(t, x...)`; defaults to `t = 0` at the origin.
    pub probe: Option<Vec<f64>>,
    pub interior_fraction: f64,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "P1".into(),
            spec: None,
            grid: GridConfig::default(),
            lattice: LatticeConfig::default(),
            simulation: SimulationConfig::default(),
            solver: SolverOptions::default(),
            check: CheckConfig::default(),
            probe: None,
            interior_fraction: INTERIOR_FRACTION,
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// State box per axis; defaults to the problem's box.
    pub bounds: Option<Vec<[f64; 2]>>,
    pub dx: f64,
    /// Time steps of the PDE solver; defaults to the CFL-limited count.
    pub steps: Option<usize>,
    pub cfl_safety: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { bounds: None, dx: 0.05, steps: None, cfl_safety: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    /// Time levels of the chain; defaults to the largest stable step.
    pub steps: Option<usize>,
    pub decision_order: DecisionOrder,
    pub force_continuation_at_initial: bool,
    /// Level at which the DPP residual re-solves; defaults to half the steps.
    pub dpp_split: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Start state; defaults to the origin.
    pub x0: Option<Vec<f64>>,
    pub t0: f64,
    pub max_impulses: usize,
    /// Leading paths written to `paths.csv`.
    pub export_paths: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { n_paths: 100_000, seed: 1, x0: None, t0: 0.0, max_impulses: 10_000, export_paths: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub assumption_samples: usize,
    pub assumption_seed: u64,
    /// Ratio of the coarse to the fine grid step in refinement suites.
    pub refinement: usize,
    /// Allowed growth of regularity constants under refinement.
    pub regularity_ratio: f64,
    /// Allowed growth of the terminal-bound constant under refinement.
    pub terminal_ratio: f64,
    /// Trailing fraction of the horizon for the terminal bound.
    pub terminal_window: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            assumption_samples: 256,
            assumption_seed: 1,
            refinement: 2,
            regularity_ratio: 1.05,
            terminal_ratio: 1.1,
            terminal_window: 0.1,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, IoError> {
        toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String, IoError> {
        toml::to_string(self).map_err(|e| IoError::Config(e.to_string()))
    }

    /// The problem this config runs.
    pub fn problem_spec(&self) -> Result<ProblemSpec, IoError> {
        let mut spec = match &self.spec {
            Some(spec) => spec.clone(),
            None => canonical(&self.problem).map_err(|e| IoError::Config(e.to_string()))?,
        };
        if let Some(bounds) = &self.grid.bounds {
            spec.domain = bounds.clone();
        }
        Ok(spec)
    }

    /// Fills every optional field from the problem and the grid step.
    pub fn resolve(mut self) -> Result<Self, IoError> {
        if !(self.grid.dx > 0.0) || !(self.grid.cfl_safety > 0.0 && self.grid.cfl_safety <= 1.0) {
            return Err(IoError::Config("grid.dx must be positive and grid.cfl_safety in (0, 1]".into()));
        }
        if !(self.interior_fraction > 0.0 && self.interior_fraction <= 1.0) {
            return Err(IoError::Config("interior_fraction must lie in (0, 1]".into()));
        }
        if self.check.refinement < 2 {
            return Err(IoError::Config("check.refinement must be at least 2".into()));
        }
        let spec = self.problem_spec()?;
        spec.check().map_err(|e| IoError::Config(e.to_string()))?;
        if let Some(s) = &self.spec {
            self.problem = s.name.clone();
        }
        self.grid.bounds = Some(spec.domain.clone());
        let space = SpatialGrid::from_box(&spec.domain, self.grid.dx).map_err(|e| IoError::Config(e.to_string()))?;
        if self.grid.steps.is_none() {
            let grid = pde_grid(&spec, space.clone(), self.grid.cfl_safety).map_err(|e| IoError::Config(e.to_string()))?;
            self.grid.steps = Some(grid.steps);
        }
        if self.lattice.steps.is_none() {
            let steps = default_lattice_steps(&spec, &space).map_err(|e| IoError::Config(e.to_string()))?;
            self.lattice.steps = Some(steps);
        }
        if self.lattice.dpp_split.is_none() {
            self.lattice.dpp_split = self.lattice.steps.map(|n| (n / 2).max(1));
        }
        if self.simulation.x0.is_none() {
            self.simulation.x0 = Some(vec![0.0; spec.dim]);
        }
        if self.probe.is_none() {
            self.probe = Some(vec![0.0; spec.dim + 1]);
        }
        let probe = self.probe.as_ref().expect("set above");
        if probe.len() != spec.dim + 1 {
            return Err(IoError::Config(format!("probe needs t and {} coordinates", spec.dim)));
        }
        if self.simulation.x0.as_ref().is_some_and(|x| x.len() != spec.dim) {
            return Err(IoError::Config(format!("simulation.x0 needs {} coordinates", spec.dim)));
        }
        Ok(self)
    }
}

/// Reads and resolves a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    RunConfig::from_toml_str(&text)?.resolve()
}
