//! Nonlocal intervention operators on grid slices.
//!
//! The lower obstacle `sup_y [V(x + y) - c(t, y)]` belongs to player I, the
//! upper obstacle `inf_z [V(x + z) + χ(t, z)]` to player II. Shifted states
//! are interpolated multilinearly; shifts leaving the grid box are excluded.

use rayon::prelude::*;

use crate::grid::{GridSlice, ShiftStencil, SpatialGrid};
use crate::problem::{ProblemError, ProblemSpec};

/// Default relative tolerance of the `binding` flag.
pub const BINDING_TOL: f64 = 1e-8;

/// One obstacle evaluated on a slice. `None` marks nodes where every shift
/// leaves the grid (the obstacle does not bind there).
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleSlice {
    pub values: Vec<Option<f64>>,
    pub best_action: Vec<Option<usize>>,
    /// Obstacle within `binding_tol * (unit + |V|)` of the slice value.
    pub binding: Vec<bool>,
    pub binding_tol: f64,
    /// Absolute floor of the binding test, in value units.
    pub unit: f64,
}

impl ObstacleSlice {
    pub fn nonbinding(len: usize) -> Self {
        Self { values: vec![None; len], best_action: vec![None; len], binding: vec![false; len], binding_tol: BINDING_TOL, unit: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
}

/// Both operators with shift stencils and costs frozen at one time.
#[derive(Debug, Clone)]
pub struct Intervention {
    grid: SpatialGrid,
    lower: Vec<(ShiftStencil, f64)>,
    upper: Vec<(ShiftStencil, f64)>,
    binding_tol: f64,
    unit: f64,
}

impl Intervention {
    pub fn new(spec: &ProblemSpec, grid: &SpatialGrid, t: f64) -> Result<Self, ProblemError> {
        let lower = spec
            .impulses_u
            .actions
            .iter()
            .map(|a| Ok((grid.shift_stencil(a), spec.cost_at(t, a)?)))
            .collect::<Result<_, ProblemError>>()?;
        let upper = spec
            .impulses_v
            .actions
            .iter()
            .map(|a| Ok((grid.shift_stencil(a), spec.gain_at(t, a)?)))
            .collect::<Result<_, ProblemError>>()?;
        Ok(Self { grid: grid.clone(), lower, upper, binding_tol: BINDING_TOL, unit: 1.0 })
    }

    /// Same operators for values multiplied by `factor`: costs and the
    /// binding floor scale with it.
    pub fn scaled(mut self, factor: f64) -> Self {
        for (_, c) in self.lower.iter_mut().chain(self.upper.iter_mut()) {
            *c *= factor;
        }
        self.unit *= factor;
        self
    }

    pub fn with_binding_tol(mut self, tol: f64) -> Self {
        self.binding_tol = tol;
        self
    }

    pub fn lower(&self, values: &[f64]) -> ObstacleSlice {
        self.apply(values, Side::Lower)
    }

    pub fn upper(&self, values: &[f64]) -> ObstacleSlice {
        self.apply(values, Side::Upper)
    }

    fn apply(&self, values: &[f64], side: Side) -> ObstacleSlice {
        let actions = match side {
            Side::Lower => &self.lower,
            Side::Upper => &self.upper,
        };
        if actions.is_empty() {
            return ObstacleSlice::nonbinding(values.len());
        }
        let per_node: Vec<(Option<f64>, Option<usize>, bool)> = (0..values.len())
            .into_par_iter()
            .map(|node| {
                let candidate = |k: usize| {
                    let (stencil, cost) = &actions[k];
                    self.grid.shifted_value(values, node, stencil).map(|v| match side {
                        Side::Lower => v - cost,
                        Side::Upper => v + cost,
                    })
                };
                let mut best: Option<f64> = None;
                for k in 0..actions.len() {
                    if let Some(c) = candidate(k) {
                        best = Some(match (best, side) {
                            (None, _) => c,
                            (Some(b), Side::Lower) => b.max(c),
                            (Some(b), Side::Upper) => b.min(c),
                        });
                    }
                }
                // Smallest index among near-ties.
                let best = best.map(|b| {
                    let tol = self.binding_tol * (self.unit + b.abs());
                    let k = (0..actions.len()).find(|&k| candidate(k).is_some_and(|c| (c - b).abs() <= tol));
                    (b, k.expect("the optimum is attained"))
                });
                match best {
                    Some((v, k)) => {
                        let binding = (v - values[node]).abs() <= self.binding_tol * (self.unit + values[node].abs());
                        (Some(v), Some(k), binding)
                    }
                    None => (None, None, false),
                }
            })
            .collect();
        let mut out = ObstacleSlice::nonbinding(values.len());
        out.binding_tol = self.binding_tol;
        out.unit = self.unit;
        for (node, (v, a, b)) in per_node.into_iter().enumerate() {
            out.values[node] = v;
            out.best_action[node] = a;
            out.binding[node] = b;
        }
        out
    }
}

/// `sup_y [V(t, x + y) - c(t, y)]` over player I's actions.
pub fn lower_obstacle(slice: &GridSlice, spec: &ProblemSpec) -> Result<ObstacleSlice, ProblemError> {
    Ok(Intervention::new(spec, &slice.grid, slice.time)?.lower(&slice.values))
}

/// `inf_z [V(t, x + z) + χ(t, z)]` over player II's actions.
pub fn upper_obstacle(slice: &GridSlice, spec: &ProblemSpec) -> Result<ObstacleSlice, ProblemError> {
    Ok(Intervention::new(spec, &slice.grid, slice.time)?.upper(&slice.values))
}
