//! Quantitative checks on solved fields: the projection identity, discrete
//! regularity constants, the near-terminal bound and a sup-norm bound.

use rayon::prelude::*;

use crate::field::{Region, ValueField};
use crate::grid::GridSlice;
use crate::intervention::Intervention;
use crate::problem::ProblemSpec;

use super::projection::{project_double_obstacle, Projection};
use super::scheme::step_backward;
use super::SolverError;

/// Recomputes every level's projection from the stored values: the
/// continuation from the next level (or `Φ` at the horizon) and both
/// obstacles from the level itself. With `θ > 0` everything is expressed
/// for `W = e^{θt} V` with costs scaled by `e^{θt}`.
pub fn reproject(spec: &ProblemSpec, field: &ValueField, theta: f64) -> Result<Vec<Projection>, SolverError> {
    let grid = &field.grid;
    let space = &grid.space;
    (0..field.levels())
        .map(|k| {
            let t = grid.time(k);
            let scale = (theta * t).exp();
            let cont = if k == grid.steps {
                GridSlice::from_fn(space.clone(), t, |x| spec.terminal_at(x))?
            } else {
                step_backward(spec, grid, &field.slice(k + 1))?
            };
            let cont = GridSlice::new(space.clone(), t, cont.values.iter().map(|v| v * scale).collect());
            let w: Vec<f64> = field.values[k].iter().map(|v| v * scale).collect();
            let op = Intervention::new(spec, space, t)?.scaled(scale);
            Ok(project_double_obstacle(&cont, &op.lower(&w), &op.upper(&w)))
        })
        .collect()
}

/// Outcome of comparing stored values and labels with [`reproject`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IdentityCheck {
    /// Nodes whose stored value differs from the recomputed projection.
    pub value_mismatches: usize,
    pub max_defect: f64,
    /// Nodes whose region or action label differs.
    pub label_mismatches: usize,
}

impl IdentityCheck {
    pub fn exact(&self) -> bool {
        self.value_mismatches == 0 && self.label_mismatches == 0
    }
}

/// Checks `V = min(ℳ⁺V, max(cont, ℳ⁻V))` bit for bit at every node.
pub fn projection_identity(spec: &ProblemSpec, field: &ValueField) -> Result<IdentityCheck, SolverError> {
    compare_projections(field, &reproject(spec, field, 0.0)?, 0.0)
}

/// Checks that labels recomputed for `e^{θt} V` under rescaled costs equal
/// the stored labels.
pub fn theta_label_check(spec: &ProblemSpec, field: &ValueField, theta: f64) -> Result<IdentityCheck, SolverError> {
    compare_projections(field, &reproject(spec, field, theta)?, theta)
}

fn compare_projections(field: &ValueField, projections: &[Projection], theta: f64) -> Result<IdentityCheck, SolverError> {
    let mut check = IdentityCheck::default();
    for (k, p) in projections.iter().enumerate() {
        let scale = (theta * field.grid.time(k)).exp();
        for node in 0..p.slice.values.len() {
            let stored = field.values[k][node] * scale;
            let d = (p.slice.values[node] - stored).abs();
            if p.slice.values[node].to_bits() != stored.to_bits() {
                check.value_mismatches += 1;
                check.max_defect = check.max_defect.max(d);
            }
            if p.regions[node] != field.regions[k][node] || p.actions[node] != field.actions[k][node] {
                check.label_mismatches += 1;
            }
        }
    }
    Ok(check)
}

/// Largest `|ΔV| / Δx` between axis neighbours inside the interior box.
pub fn lipschitz_in_x(field: &ValueField, interior_fraction: f64) -> f64 {
    let space = &field.grid.space;
    let mask = space.interior_mask(interior_fraction);
    field
        .values
        .par_iter()
        .map(|v| {
            let mut m = 0.0f64;
            for node in 0..space.len() {
                if !mask[node] {
                    continue;
                }
                let idx = space.multi_index(node);
                for (a, axis) in space.axes.iter().enumerate() {
                    if idx[a] + 1 < axis.count {
                        let next = node + space.stride(a);
                        if mask[next] {
                            m = m.max((v[next] - v[node]).abs() / axis.step);
                        }
                    }
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max)
}

/// Largest `|V(t, x) - V(s, x)| / |t - s|^{1/2}` over level pairs and
/// interior nodes.
pub fn holder_in_t(field: &ValueField, interior_fraction: f64) -> f64 {
    let mask = field.grid.space.interior_mask(interior_fraction);
    let nodes: Vec<usize> = (0..mask.len()).filter(|&n| mask[n]).collect();
    let levels = field.levels();
    (0..levels)
        .into_par_iter()
        .map(|k| {
            let mut m = 0.0f64;
            for l in k + 1..levels {
                let gap = (field.grid.time(l) - field.grid.time(k)).sqrt();
                let (a, b) = (&field.values[k], &field.values[l]);
                let d = nodes.iter().fold(0.0f64, |acc, &n| acc.max((a[n] - b[n]).abs()));
                m = m.max(d / gap);
            }
            m
        })
        .reduce(|| 0.0, f64::max)
}

/// Smallest `C` with `sup_x |V(t, x) - V(T, x)| <= C (T - t)^{1/2}` over the
/// levels in the last `window` share of the horizon.
pub fn terminal_bound_constant(field: &ValueField, interior_fraction: f64, window: f64) -> f64 {
    let grid = &field.grid;
    let mask = grid.space.interior_mask(interior_fraction);
    let last = &field.values[grid.steps];
    (0..grid.steps)
        .filter(|&k| grid.horizon - grid.time(k) <= window * grid.horizon + 1e-12)
        .map(|k| {
            let d = field.values[k]
                .iter()
                .zip(last)
                .zip(&mask)
                .filter(|(_, &m)| m)
                .fold(0.0f64, |acc, ((a, b), _)| acc.max((a - b).abs()));
            d / (grid.horizon - grid.time(k)).sqrt()
        })
        .fold(0.0, f64::max)
}

/// A priori bound `e^{L T} (sup|Φ| + T sup|f(·, ·, 0, 0)|)` with `L` the
/// driver's Lipschitz constant, sampled on the grid nodes. Interventions
/// cannot raise it: each player only acts when acting improves its side.
pub fn value_bound(spec: &ProblemSpec, field: &ValueField) -> Result<f64, SolverError> {
    let space = &field.grid.space;
    let zero = vec![0.0; spec.noise_dim];
    let times = [0.0, 0.5 * spec.horizon, spec.horizon];
    let mut phi = 0.0f64;
    let mut f = 0.0f64;
    let mut x = vec![0.0; spec.dim];
    for node in 0..space.len() {
        space.coords(node, &mut x);
        phi = phi.max(spec.terminal_at(&x)?.abs());
        for &t in &times {
            f = f.max(spec.driver_at(t, &x, 0.0, &zero)?.abs());
        }
    }
    Ok((spec.driver_lipschitz() * spec.horizon).exp() * (phi + spec.horizon * f))
}

/// `sup |V|` over all levels and nodes.
pub fn sup_abs(field: &ValueField) -> f64 {
    field.values.iter().flatten().fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// Share of nodes in each region, ordered as `Region::ALL`.
pub fn region_shares(field: &ValueField) -> [f64; 3] {
    let counts = field.region_counts();
    let total = counts.iter().sum::<usize>().max(1) as f64;
    let mut out = [0.0; 3];
    for r in Region::ALL {
        out[r.index()] = counts[r.index()] as f64 / total;
    }
    out
}
