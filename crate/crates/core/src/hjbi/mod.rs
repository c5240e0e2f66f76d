//! Backward finite-difference solver for the double-obstacle HJBI
//! quasi-variational inequality
//!
//! ```text
//! max{ V - ℳ⁺V, min{ -∂tV - H(t, x, V, DV, D²V), V - ℳ⁻V } } = 0
//! ```
//!
//! Each level takes one explicit step of the continuation equation, then
//! iterates the double-obstacle projection with obstacles recomputed from
//! the current iterate.

pub mod diagnostics;
mod projection;
mod residual;
mod scheme;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::ValueField;
use crate::grid::{GridError, SpaceTimeGrid};
use crate::intervention::{Intervention, BINDING_TOL};
use crate::problem::{ProblemError, ProblemSpec};

pub use projection::{obstacle_fixed_point, project_double_obstacle, terminal_projection, Projection};
pub use residual::{qvi_residual, region_sup, scaled_qvi_residual, theta_transform, ResidualField, INTERIOR_FRACTION};
pub use scheme::{cfl_dt, coefficient_maxima, diffusion_matrix, hamiltonian, pde_grid, step_backward};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("CFL violated at t = {time}: dt = {dt} exceeds {limit}")]
    Cfl { time: f64, dt: f64, limit: f64 },
    #[error("obstacle fixed point at t = {time} did not converge: change {change} after {passes} passes")]
    NonConvergence { time: f64, passes: usize, change: f64 },
    #[error("invalid solver setup: {0}")]
    Config(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Fixed-point and labelling tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Sup-change at which the obstacle iteration stops.
    pub fixed_point_tol: f64,
    /// Keep iterating past `fixed_point_tol` until the iterate is exactly
    /// stationary (still bounded by `max_passes`).
    pub exact_fixed_point: bool,
    pub max_passes: usize,
    /// Sup-change still tolerated when the pass cap is reached.
    pub divergence_tol: f64,
    pub binding_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { fixed_point_tol: 1e-10, exact_fixed_point: true, max_passes: 100, divergence_tol: 1e-6, binding_tol: BINDING_TOL }
    }
}

/// Solves backward from the projected terminal slice to `t = 0`.
pub fn solve_pde(spec: &ProblemSpec, grid: &SpaceTimeGrid, opts: &SolverOptions) -> Result<ValueField, SolverError> {
    spec.check()?;
    if grid.space.dim() != spec.dim {
        return Err(SolverError::Config(format!("grid has {} axes, problem {}", grid.space.dim(), spec.dim)));
    }
    if (grid.horizon - spec.horizon).abs() > 1e-12 * spec.horizon {
        return Err(SolverError::Config("grid horizon differs from the problem horizon".into()));
    }
    let levels = grid.steps + 1;
    let mut field = ValueField::unlabeled(grid.clone(), vec![Vec::new(); levels]);
    let top = terminal_projection(spec, &grid.space, opts)?;
    store(&mut field, grid.steps, top);
    for k in (0..grid.steps).rev() {
        let cont = step_backward(spec, grid, &field.slice(k + 1))?;
        let op = Intervention::new(spec, &grid.space, grid.time(k))?.with_binding_tol(opts.binding_tol);
        let p = obstacle_fixed_point(&op, &cont, opts)?;
        store(&mut field, k, p);
    }
    Ok(field)
}

fn store(field: &mut ValueField, level: usize, p: Projection) {
    field.values[level] = p.slice.values;
    field.regions[level] = p.regions;
    field.actions[level] = p.actions;
    field.passes[level] = p.passes;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Region;
    use crate::grid::SpatialGrid;
    use crate::problem::{canonical, CoefficientForm};

    fn solve(name: &str, dx: f64) -> (ProblemSpec, ValueField) {
        let spec = canonical(name).unwrap();
        let space = SpatialGrid::from_box(&spec.domain, dx).unwrap();
        let grid = pde_grid(&spec, space, 0.9).unwrap();
        let field = solve_pde(&spec, &grid, &SolverOptions::default()).unwrap();
        (spec, field)
    }

    #[test]
    fn frozen_problem_keeps_terminal_value() {
        let (spec, field) = solve("P0", 0.1);
        assert_eq!(field.levels(), 2);
        assert!(field.values.iter().flatten().all(|&v| v == 1.0));
        assert_eq!(field.region_counts()[0], 2 * field.grid.space.len());
        let res = qvi_residual(&spec, &field).unwrap();
        assert!(res.sup_norm <= 1e-12);
    }

    #[test]
    fn heat_problem_matches_closed_form() {
        let (_, field) = solve("P1", 0.1);
        let v = field.value_at(0.0, &[0.0]).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-2, "{v}");
        assert_eq!(field.region_counts()[0], field.levels() * field.grid.space.len());
    }

    #[test]
    fn comparison_of_ordered_terminal_data() {
        let mut lo = canonical("P3").unwrap();
        let mut hi = lo.clone();
        lo.terminal = CoefficientForm::cosine(0.8, 1.0);
        hi.terminal = CoefficientForm::linear(0.8, 0.0, &[0.0]);
        let space = SpatialGrid::from_box(&lo.domain, 0.2).unwrap();
        let grid = pde_grid(&lo, space, 0.9).unwrap();
        let a = solve_pde(&lo, &grid, &SolverOptions::default()).unwrap();
        let b = solve_pde(&hi, &grid, &SolverOptions::default()).unwrap();
        for (x, y) in a.values.iter().flatten().zip(b.values.iter().flatten()) {
            assert!(x <= y);
        }
    }

    #[test]
    fn game_problem_intervenes_and_satisfies_identity() {
        let (spec, field) = solve("P3", 0.1);
        let counts = field.region_counts();
        // Player II can always reach cos x ≈ -1 for 0.6, so player I never recovers its cost of 1.
        assert_eq!(counts[Region::PlayerI.index()], 0);
        assert!(counts[Region::PlayerII.index()] > 0);
        let check = diagnostics::projection_identity(&spec, &field).unwrap();
        assert!(check.exact(), "{check:?}");
    }
}
