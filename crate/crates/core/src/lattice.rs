//! Discrete game on a controlled Markov chain, solved by backward induction.
//!
//! Each axis moves by at most one lattice step per time level. Weights are
//! the central three-point ones `a dt/(2dx²) ± b dt/(2dx)` when both are
//! nonnegative and the upwind ones `a dt/(2dx²) + b± dt/dx` otherwise.
//! Nodes on the box boundary absorb. Values propagate through a one-step
//! explicit BSDE update, then through the same double-obstacle clamp as the
//! PDE solver, with impulses restricted to whole lattice shifts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Region, ValueField};
use crate::grid::{sup_diff, GridError, SpaceTimeGrid, SpatialGrid};
use crate::hjbi::{coefficient_maxima, diffusion_matrix, SolverError, SolverOptions};
use crate::problem::{ProblemError, ProblemSpec};

const ALIGN_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("negative transition weight {weight} at t = {time}, x = {x:?}: dt too large")]
    NegativeWeight { time: f64, x: Vec<f64>, weight: f64 },
    #[error("impulse action {action:?} is not a multiple of the lattice step {dx}")]
    Misaligned { action: Vec<f64>, dx: f64 },
    #[error("lattice transitions need a diagonal diffusion, got off-diagonal {value} at x = {x:?}")]
    NonDiagonal { x: Vec<f64>, value: f64 },
    #[error("split level {split} must lie strictly between 0 and {steps}")]
    BadSplit { split: usize, steps: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Transitions out of every node for one time level, in CSR layout.
#[derive(Debug, Clone, PartialEq)]
struct TransitionTable {
    start: Vec<usize>,
    child: Vec<usize>,
    weight: Vec<f64>,
    /// `child - x` per entry.
    step: Vec<[f64; 2]>,
    /// Per node: diagonal of `σσᵀ` and `σ` row-major.
    diag: Vec<[f64; 2]>,
    sigma: Vec<f64>,
}

impl TransitionTable {
    fn row(&self, node: usize) -> std::ops::Range<usize> {
        self.start[node]..self.start[node + 1]
    }
}

/// Time levels, lattice and transition weights of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeModel {
    pub grid: SpaceTimeGrid,
    tables: Vec<TransitionTable>,
    /// Table used by the transition out of each level.
    table_of_level: Vec<usize>,
    /// Integer node offsets of player I and player II actions.
    shifts_u: Vec<[i64; 2]>,
    shifts_v: Vec<[i64; 2]>,
}

/// Largest `dt` for which every transition weight is nonnegative.
pub fn max_lattice_dt(spec: &ProblemSpec, space: &SpatialGrid) -> Result<f64, LatticeError> {
    let times = sample_times(spec);
    let (amax, bmax) = coefficient_maxima(spec, space, &times)?;
    let dx = space.min_step();
    let mut rate = 0.0;
    for _ in 0..spec.dim {
        let upwind = if amax >= bmax * dx { 0.0 } else { bmax / dx };
        rate += amax / (dx * dx) + upwind;
    }
    Ok(if rate > 0.0 { 1.0 / rate } else { f64::INFINITY })
}

/// Fewest uniform time steps with nonnegative weights.
pub fn default_lattice_steps(spec: &ProblemSpec, space: &SpatialGrid) -> Result<usize, LatticeError> {
    let dt = max_lattice_dt(spec, space)?;
    Ok(((spec.horizon / dt - 1e-9).ceil() as usize).max(1))
}

fn sample_times(spec: &ProblemSpec) -> Vec<f64> {
    if spec.dynamics_time_independent() {
        vec![0.0]
    } else {
        (0..=16).map(|k| spec.horizon * k as f64 / 16.0).collect()
    }
}

fn aligned_offsets(actions: &[Vec<f64>], dx: f64) -> Result<Vec<[i64; 2]>, LatticeError> {
    actions
        .iter()
        .map(|a| {
            let mut off = [0i64; 2];
            for (i, &v) in a.iter().enumerate() {
                let k = (v / dx).round();
                if (v / dx - k).abs() > ALIGN_TOL * k.abs().max(1.0) {
                    return Err(LatticeError::Misaligned { action: a.clone(), dx });
                }
                off[i] = k as i64;
            }
            Ok(off)
        })
        .collect()
}

/// Builds the chain on the origin-anchored lattice of `bounds` with step `dx`
/// and `steps` uniform time levels.
pub fn build_lattice(spec: &ProblemSpec, steps: usize, bounds: &[[f64; 2]], dx: f64) -> Result<LatticeModel, LatticeError> {
    spec.check()?;
    let space = SpatialGrid::from_box(bounds, dx)?;
    let grid = SpaceTimeGrid::new(space, spec.horizon, steps)?;
    let shifts_u = aligned_offsets(&spec.impulses_u.actions, dx)?;
    let shifts_v = aligned_offsets(&spec.impulses_v.actions, dx)?;
    let (tables, table_of_level) = if spec.dynamics_time_independent() {
        (vec![transition_table(spec, &grid, 0.0)?], vec![0; steps])
    } else {
        let tables = (0..steps).map(|k| transition_table(spec, &grid, grid.time(k))).collect::<Result<_, _>>()?;
        (tables, (0..steps).collect())
    };
    Ok(LatticeModel { grid, tables, table_of_level, shifts_u, shifts_v })
}

fn transition_table(spec: &ProblemSpec, grid: &SpaceTimeGrid, t: f64) -> Result<TransitionTable, LatticeError> {
    let space = &grid.space;
    let (n, d) = (spec.dim, spec.noise_dim);
    let dt = grid.dt();
    type Row = (Vec<(usize, f64, [f64; 2])>, [f64; 2], Vec<f64>);
    let rows = (0..space.len())
        .into_par_iter()
        .map(|node| -> Result<Row, LatticeError> {
            let x = space.coords_vec(node);
            let mut b = vec![0.0; n];
            let mut sigma = vec![0.0; n * d];
            spec.drift_at(t, &x, &mut b)?;
            spec.sigma_at(t, &x, &mut sigma)?;
            let a = diffusion_matrix(&sigma, n, d);
            let mut diag = [0.0; 2];
            for i in 0..n {
                diag[i] = a[i * n + i];
            }
            if n == 2 && a[1] != 0.0 {
                return Err(LatticeError::NonDiagonal { x, value: a[1] });
            }
            let idx = space.multi_index(node);
            let boundary = space.axes.iter().enumerate().any(|(i, ax)| idx[i] == 0 || idx[i] + 1 == ax.count);
            if boundary {
                return Ok((vec![(node, 1.0, [0.0; 2])], diag, sigma));
            }
            let mut row = Vec::with_capacity(2 * n + 1);
            let mut stay = 1.0;
            for i in 0..n {
                let h = space.axes[i].step;
                let diffusive = diag[i] * dt / (2.0 * h * h);
                let drift = b[i] * dt / (2.0 * h);
                let (up, down) = if diffusive - drift.abs() >= 0.0 {
                    (diffusive + drift, diffusive - drift)
                } else {
                    (diffusive + b[i].max(0.0) * dt / h, diffusive + (-b[i]).max(0.0) * dt / h)
                };
                let stride = space.stride(i);
                let mut e = [0.0; 2];
                e[i] = h;
                if up != 0.0 {
                    row.push((node + stride, up, e));
                }
                e[i] = -h;
                if down != 0.0 {
                    row.push((node - stride, down, e));
                }
                stay -= up + down;
            }
            if stay < -1e-14 {
                return Err(LatticeError::NegativeWeight { time: t, x, weight: stay });
            }
            if stay > 1e-14 {
                row.push((node, stay, [0.0; 2]));
            }
            Ok((row, diag, sigma))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = TransitionTable {
        start: vec![0],
        child: Vec::new(),
        weight: Vec::new(),
        step: Vec::new(),
        diag: Vec::with_capacity(rows.len()),
        sigma: Vec::with_capacity(rows.len() * n * d),
    };
    for (row, diag, sigma) in rows {
        for (c, w, e) in row {
            table.child.push(c);
            table.weight.push(w);
            table.step.push(e);
        }
        table.start.push(table.child.len());
        table.diag.push(diag);
        table.sigma.extend(sigma);
    }
    Ok(table)
}

impl LatticeModel {
    fn table(&self, level: usize) -> &TransitionTable {
        &self.tables[self.table_of_level[level]]
    }

    /// `(child, weight)` pairs out of `node` at `level`.
    pub fn transitions(&self, level: usize, node: usize) -> Vec<(usize, f64)> {
        let tab = self.table(level);
        tab.row(node).map(|e| (tab.child[e], tab.weight[e])).collect()
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt()
    }
}

/// Worst local consistency defects of the chain over interior nodes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentCheck {
    /// `max |E[Δx] - b dt|`.
    pub mean: f64,
    /// `max |E[Δx Δxᵀ] - σσᵀ dt|`.
    pub covariance: f64,
    /// `max |Σ w - 1|`.
    pub mass: f64,
}

pub fn moment_check(model: &LatticeModel, spec: &ProblemSpec) -> Result<MomentCheck, LatticeError> {
    let n = spec.dim;
    let dt = model.dt();
    let space = &model.grid.space;
    let mut out = MomentCheck::default();
    let mut b = vec![0.0; n];
    for level in 0..model.grid.steps {
        if level > 0 && model.table_of_level[level] == model.table_of_level[level - 1] {
            continue;
        }
        let t = model.grid.time(level);
        let tab = model.table(level);
        for node in 0..space.len() {
            let row = tab.row(node);
            if row.len() == 1 && tab.child[row.start] == node && tab.weight[row.start] == 1.0 {
                continue;
            }
            let x = space.coords_vec(node);
            spec.drift_at(t, &x, &mut b)?;
            let mass: f64 = row.clone().map(|e| tab.weight[e]).sum();
            out.mass = out.mass.max((mass - 1.0).abs());
            for i in 0..n {
                let mean: f64 = row.clone().map(|e| tab.weight[e] * tab.step[e][i]).sum();
                out.mean = out.mean.max((mean - b[i] * dt).abs());
                for j in 0..n {
                    let cov: f64 = row.clone().map(|e| tab.weight[e] * tab.step[e][i] * tab.step[e][j]).sum();
                    let target = if i == j { tab.diag[node][i] * dt } else { 0.0 };
                    out.covariance = out.covariance.max((cov - target).abs());
                }
            }
        }
    }
    Ok(out)
}

/// One step of the discrete backward semigroup from `level + 1` to `level`:
/// `m = E[V' + Θ']`, `z = E[(V' + Θ' - m) Δx] / (a dt) σ` and
/// `Y = m + f(t, x, m, z) dt`. `theta_increment` is indexed by child node.
pub fn backward_semigroup_step(
    model: &LatticeModel,
    spec: &ProblemSpec,
    level: usize,
    child_values: &[f64],
    theta_increment: Option<&[f64]>,
) -> Result<Vec<f64>, LatticeError> {
    let (n, d) = (spec.dim, spec.noise_dim);
    let t = model.grid.time(level);
    let dt = model.dt();
    let tab = model.table(level);
    let space = &model.grid.space;
    (0..space.len())
        .into_par_iter()
        .map(|node| {
            let target = |c: usize| child_values[c] + theta_increment.map_or(0.0, |th| th[c]);
            let row = tab.row(node);
            let m: f64 = row.clone().map(|e| tab.weight[e] * target(tab.child[e])).sum();
            let mut grad = [0.0; 2];
            for (i, g) in grad.iter_mut().enumerate().take(n) {
                let a = tab.diag[node][i];
                if a > 0.0 {
                    let cov: f64 = row.clone().map(|e| tab.weight[e] * (target(tab.child[e]) - m) * tab.step[e][i]).sum();
                    *g = cov / (a * dt);
                }
            }
            let sigma = &tab.sigma[node * n * d..(node + 1) * n * d];
            let z: Vec<f64> = (0..d).map(|k| (0..n).map(|i| grad[i] * sigma[i * d + k]).sum()).collect();
            let x = space.coords_vec(node);
            Ok(m + spec.driver_at(t, &x, m, &z)? * dt)
        })
        .collect()
}

/// Which player settles a node first when both clamps apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionOrder {
    /// `min(ℳ⁺, max(cont, ℳ⁻))`: player II's clamp has the last word.
    #[default]
    #[serde(rename = "player_ii_first")]
    PlayerIIFirst,
    /// `max(min(cont, ℳ⁺), ℳ⁻)`, the reversed order.
    #[serde(rename = "player_i_first")]
    PlayerIFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GameOptions {
    pub order: DecisionOrder,
    /// Skip the obstacle clamp at level 0.
    pub force_continuation_at_initial: bool,
    pub fixed_point: SolverOptions,
}

struct Clamped {
    values: Vec<f64>,
    regions: Vec<Region>,
    actions: Vec<Option<usize>>,
    passes: usize,
}

impl LatticeModel {
    /// `(best value, action)` over a shift list, exact lattice lookups only.
    fn best_shift(&self, values: &[f64], node: usize, shifts: &[[i64; 2]], costs: &[f64], maximize: bool) -> Option<(f64, usize)> {
        let space = &self.grid.space;
        let idx = space.multi_index(node);
        let mut best: Option<(f64, usize)> = None;
        'actions: for (k, s) in shifts.iter().enumerate() {
            let mut target = [0usize; 2];
            for (i, axis) in space.axes.iter().enumerate() {
                let j = idx[i] as i64 + s[i];
                if j < 0 || j >= axis.count as i64 {
                    continue 'actions;
                }
                target[i] = j as usize;
            }
            let v = if maximize {
                values[space.node_at(target)] - costs[k]
            } else {
                values[space.node_at(target)] + costs[k]
            };
            let better = match best {
                None => true,
                Some((b, _)) => (maximize && v > b) || (!maximize && v < b),
            };
            if better {
                best = Some((v, k));
            }
        }
        best
    }

    fn clamp(&self, spec: &ProblemSpec, t: f64, cont: &[f64], opts: &GameOptions) -> Result<Clamped, LatticeError> {
        let cu = spec.impulses_u.actions.iter().map(|a| spec.cost_at(t, a)).collect::<Result<Vec<_>, _>>()?;
        let cv = spec.impulses_v.actions.iter().map(|a| spec.gain_at(t, a)).collect::<Result<Vec<_>, _>>()?;
        let fp = &opts.fixed_point;
        let mut current = cont.to_vec();
        let mut passes = 0;
        loop {
            let pass: Vec<(f64, Region, Option<usize>)> = (0..cont.len())
                .into_par_iter()
                .map(|node| {
                    let lower = self.best_shift(&current, node, &self.shifts_u, &cu, true);
                    let upper = self.best_shift(&current, node, &self.shifts_v, &cv, false);
                    let c = cont[node];
                    match opts.order {
                        DecisionOrder::PlayerIIFirst => {
                            let mut out = (c, Region::Cont, None);
                            if let Some((l, k)) = lower.filter(|&(l, _)| l > c) {
                                out = (l, Region::PlayerI, Some(k));
                            }
                            if let Some((u, k)) = upper.filter(|&(u, _)| u < out.0) {
                                out = (u, Region::PlayerII, Some(k));
                            }
                            out
                        }
                        DecisionOrder::PlayerIFirst => {
                            let mut out = (c, Region::Cont, None);
                            if let Some((u, k)) = upper.filter(|&(u, _)| u < c) {
                                out = (u, Region::PlayerII, Some(k));
                            }
                            if let Some((l, k)) = lower.filter(|&(l, _)| l > out.0) {
                                out = (l, Region::PlayerI, Some(k));
                            }
                            out
                        }
                    }
                })
                .collect();
            passes += 1;
            let next: Vec<f64> = pass.iter().map(|p| p.0).collect();
            let change = sup_diff(&next, &current);
            current = next;
            let settled = if fp.exact_fixed_point { change == 0.0 } else { change <= fp.fixed_point_tol };
            if settled || passes >= fp.max_passes {
                if change > fp.divergence_tol {
                    return Err(SolverError::NonConvergence { time: t, passes, change }.into());
                }
                return Ok(Clamped {
                    values: current,
                    regions: pass.iter().map(|p| p.1).collect(),
                    actions: pass.iter().map(|p| p.2).collect(),
                    passes,
                });
            }
        }
    }
}

/// Backward induction over all levels from the clamped terminal payoff.
pub fn solve_game(model: &LatticeModel, spec: &ProblemSpec, opts: &GameOptions) -> Result<ValueField, LatticeError> {
    let space = &model.grid.space;
    let phi = (0..space.len()).map(|node| spec.terminal_at(&space.coords_vec(node))).collect::<Result<Vec<_>, _>>()?;
    solve_from(model, spec, model.grid.steps, &phi, opts)
}

/// Backward induction over levels `0..=top`, starting from `top_values`
/// clamped at level `top`. The returned field covers `top + 1` levels.
pub fn solve_from(
    model: &LatticeModel,
    spec: &ProblemSpec,
    top: usize,
    top_values: &[f64],
    opts: &GameOptions,
) -> Result<ValueField, LatticeError> {
    let grid = SpaceTimeGrid::new(model.grid.space.clone(), model.grid.time(top), top.max(1))?;
    let mut field = ValueField::unlabeled(grid, vec![Vec::new(); top + 1]);
    let put = |field: &mut ValueField, k: usize, c: Clamped| {
        field.values[k] = c.values;
        field.regions[k] = c.regions;
        field.actions[k] = c.actions;
        field.passes[k] = c.passes;
    };
    let c = model.clamp(spec, model.grid.time(top), top_values, opts)?;
    put(&mut field, top, c);
    for k in (0..top).rev() {
        let cont = backward_semigroup_step(model, spec, k, &field.values[k + 1], None)?;
        if k == 0 && opts.force_continuation_at_initial {
            field.values[0] = cont;
            continue;
        }
        let c = model.clamp(spec, model.grid.time(k), &cont, opts)?;
        put(&mut field, k, c);
    }
    Ok(field)
}

/// Re-solves levels `0..=split` from the stored values at `split` and
/// returns the largest deviation from `solution` over those levels.
pub fn dpp_residual(
    model: &LatticeModel,
    spec: &ProblemSpec,
    solution: &ValueField,
    split: usize,
    opts: &GameOptions,
) -> Result<f64, LatticeError> {
    if split == 0 || split >= model.grid.steps {
        return Err(LatticeError::BadSplit { split, steps: model.grid.steps });
    }
    let again = solve_from(model, spec, split, &solution.values[split], opts)?;
    Ok((0..=split).map(|k| sup_diff(&again.values[k], &solution.values[k])).fold(0.0, f64::max))
}

/// Interior sup gap between the two decision orders over all levels.
pub fn isaacs_gap(model: &LatticeModel, spec: &ProblemSpec, opts: &GameOptions, interior_fraction: f64) -> Result<f64, LatticeError> {
    let a = solve_game(model, spec, &GameOptions { order: DecisionOrder::PlayerIIFirst, ..*opts })?;
    let b = solve_game(model, spec, &GameOptions { order: DecisionOrder::PlayerIFirst, ..*opts })?;
    let mask = model.grid.space.interior_mask(interior_fraction);
    Ok(a.values
        .iter()
        .zip(&b.values)
        .flat_map(|(x, y)| x.iter().zip(y).zip(&mask).filter(|(_, &m)| m).map(|((p, q), _)| (p - q).abs()))
        .fold(0.0, f64::max))
}
