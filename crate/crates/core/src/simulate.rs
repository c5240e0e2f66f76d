//! Forward Monte Carlo of the impulse-controlled state under feedback
//! policies read off a solved field, and pathwise cost evaluation for
//! drivers affine in `y`.
//!
//! Each path draws from its own ChaCha8 stream (`seed`, stream = path id),
//! so the ensemble does not depend on how paths are scheduled.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Region, ValueField};
use crate::grid::SpaceTimeGrid;
use crate::impulse::{ImpulseError, ImpulseSchedule, Player};
use crate::problem::{ProblemError, ProblemSpec};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid simulation setup: {0}")]
    Config(String),
    #[error("policy action {action} at level {level}, node {node} is outside the {player:?} impulse set")]
    BadAction { level: usize, node: usize, player: Player, action: usize },
    #[error("driver is not affine in y or depends on z; use the lattice oracle instead")]
    UnsupportedDriver,
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Impulse(#[from] ImpulseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Region and action per (level, node), looked up at the nearest node.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackPolicy {
    pub grid: SpaceTimeGrid,
    pub regions: Vec<Vec<Region>>,
    pub actions: Vec<Vec<Option<usize>>>,
}

impl FeedbackPolicy {
    /// Region and action at the node nearest to `x` on `level`.
    pub fn decide(&self, level: usize, x: &[f64]) -> (Region, Option<usize>) {
        let node = self.grid.space.nearest_node(x);
        (self.regions[level][node], self.actions[level][node])
    }
}

/// Copies the labels of a solved field, checking every action index.
pub fn extract_policy(field: &ValueField, spec: &ProblemSpec) -> Result<FeedbackPolicy, SimulationError> {
    for (level, (regions, actions)) in field.regions.iter().zip(&field.actions).enumerate() {
        for (node, (&r, &a)) in regions.iter().zip(actions).enumerate() {
            let (player, len) = match r {
                Region::Cont => continue,
                Region::PlayerI => (Player::I, spec.impulses_u.len()),
                Region::PlayerII => (Player::II, spec.impulses_v.len()),
            };
            match a {
                Some(action) if action < len => {}
                other => {
                    return Err(SimulationError::BadAction { level, node, player, action: other.unwrap_or(usize::MAX) })
                }
            }
        }
    }
    Ok(FeedbackPolicy { grid: field.grid.clone(), regions: field.regions.clone(), actions: field.actions.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationOptions {
    /// Impulses allowed per path before the path is flagged and left
    /// uncontrolled.
    pub max_impulses: usize,
    /// Keep states and Brownian increments of every path.
    pub record_paths: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { max_impulses: 10_000, record_paths: false }
    }
}

/// One simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub id: u64,
    /// States after the impulses of each level, when recorded.
    pub states: Vec<Vec<f64>>,
    pub increments: Vec<Vec<f64>>,
    pub schedule_i: ImpulseSchedule,
    pub schedule_ii: ImpulseSchedule,
    pub terminal_state: Vec<f64>,
    /// Accumulated impulse payoff at the horizon.
    pub theta: f64,
    pub terminal_payoff: f64,
    /// Discounted running source `∫ e^{κ(s - t0)} a(s, X_s) ds`, when the
    /// driver is affine in `y`.
    pub source: Option<f64>,
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub seed: u64,
    pub t0: f64,
    pub x0: Vec<f64>,
    pub times: Vec<f64>,
    pub paths: Vec<PathRecord>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn capped_paths(&self) -> usize {
        self.paths.iter().filter(|p| p.capped).count()
    }
}

/// Driver split `f = a(t, x) + κ y` when it has that shape.
fn affine_split(spec: &ProblemSpec) -> Option<f64> {
    spec.driver.affine_y_slope()
}

/// Euler–Maruyama from `(t0, x0)` on the policy's time levels. At each level
/// the policy is consulted before the diffusion step; the acting player keeps
/// intervening while the new state stays in its region. Player II acts when
/// the pre-impulse state is in its region, so the players never share a time.
pub fn simulate_paths(
    spec: &ProblemSpec,
    policy: &FeedbackPolicy,
    x0: &[f64],
    t0: f64,
    n_paths: usize,
    seed: u64,
    opts: &SimulationOptions,
) -> Result<PathEnsemble, SimulationError> {
    spec.check()?;
    if n_paths == 0 {
        return Err(SimulationError::Config("n_paths must be at least 1".into()));
    }
    if x0.len() != spec.dim || x0.iter().any(|v| !v.is_finite()) {
        return Err(SimulationError::Config(format!("x0 must be a finite {}-vector", spec.dim)));
    }
    let grid = &policy.grid;
    if !(0.0..=grid.horizon).contains(&t0) || (grid.horizon - spec.horizon).abs() > 1e-12 * spec.horizon {
        return Err(SimulationError::Config(format!("t0 = {t0} outside the policy horizon")));
    }
    let dt = grid.dt();
    let start = (t0 / dt).round().clamp(0.0, grid.steps as f64) as usize;
    let t0 = grid.time(start);
    let times: Vec<f64> = (start..=grid.steps).map(|k| grid.time(k)).collect();
    let kappa = affine_split(spec);
    let paths = (0..n_paths as u64)
        .into_par_iter()
        .map(|id| simulate_one(spec, policy, x0, start, kappa, seed, id, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PathEnsemble { seed, t0, x0: x0.to_vec(), times, paths })
}

#[allow(clippy::too_many_arguments)]
fn simulate_one(
    spec: &ProblemSpec,
    policy: &FeedbackPolicy,
    x0: &[f64],
    start: usize,
    kappa: Option<f64>,
    seed: u64,
    id: u64,
    opts: &SimulationOptions,
) -> Result<PathRecord, SimulationError> {
    let grid = &policy.grid;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let t0 = grid.time(start);
    let (dim, noise) = (spec.dim, spec.noise_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);

    let mut x = x0.to_vec();
    let mut drift = vec![0.0; dim];
    let mut sigma = vec![0.0; dim * noise];
    let mut dw = vec![0.0; noise];
    let mut rec = PathRecord {
        id,
        states: Vec::new(),
        increments: Vec::new(),
        schedule_i: ImpulseSchedule::empty(Player::I),
        schedule_ii: ImpulseSchedule::empty(Player::II),
        terminal_state: Vec::new(),
        theta: 0.0,
        terminal_payoff: 0.0,
        source: None,
        capped: false,
    };
    let mut impulses = 0usize;
    let zero_z = vec![0.0; noise];
    let mut source = 0.0;
    let mut previous_density: Option<f64> = None;

    for k in start..=grid.steps {
        let t = grid.time(k);
        let (first, _) = policy.decide(k, &x);
        if first != Region::Cont && !rec.capped {
            loop {
                let (region, action) = policy.decide(k, &x);
                if region != first {
                    break;
                }
                if impulses >= opts.max_impulses {
                    rec.capped = true;
                    break;
                }
                let a = action.expect("extract_policy checked every label");
                let shift = match region {
                    Region::PlayerII => {
                        let z = &spec.impulses_v.actions[a];
                        rec.theta += spec.gain_at(t, z)?;
                        rec.schedule_ii.push(t, z.clone())?;
                        z
                    }
                    _ => {
                        let y = &spec.impulses_u.actions[a];
                        rec.theta -= spec.cost_at(t, y)?;
                        rec.schedule_i.push(t, y.clone())?;
                        y
                    }
                };
                for (xi, s) in x.iter_mut().zip(shift) {
                    *xi += s;
                }
                impulses += 1;
            }
        }
        if opts.record_paths {
            rec.states.push(x.clone());
        }
        if let Some(kappa) = kappa {
            let density = (kappa * (t - t0)).exp() * spec.driver_at(t, &x, 0.0, &zero_z)?;
            if let Some(prev) = previous_density {
                source += 0.5 * dt * (prev + density);
            }
            previous_density = Some(density);
        }
        if k == grid.steps {
            break;
        }
        spec.drift_at(t, &x, &mut drift)?;
        spec.sigma_at(t, &x, &mut sigma)?;
        for w in dw.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *w = sqrt_dt * g;
        }
        for i in 0..dim {
            let row = &sigma[i * noise..(i + 1) * noise];
            x[i] += drift[i] * dt + row.iter().zip(&dw).map(|(s, w)| s * w).sum::<f64>();
        }
        if opts.record_paths {
            rec.increments.push(dw.clone());
        }
    }
    rec.terminal_payoff = spec.terminal_at(&x)?;
    rec.terminal_state = x;
    rec.source = kappa.map(|_| source);
    Ok(rec)
}

/// Neumaier-compensated sum in iteration order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Per-path payoff `e^{κ(T - t0)} (Φ(X_T) + Θ_T) + ∫ e^{κ(s - t0)} a(s, X_s) ds`.
pub fn path_payoffs(ensemble: &PathEnsemble, spec: &ProblemSpec) -> Result<Vec<f64>, SimulationError> {
    let kappa = affine_split(spec).ok_or(SimulationError::UnsupportedDriver)?;
    let growth = (kappa * (spec.horizon - ensemble.t0)).exp();
    ensemble
        .paths
        .iter()
        .map(|p| {
            let source = p.source.ok_or(SimulationError::UnsupportedDriver)?;
            Ok(growth * (p.terminal_payoff + p.theta) + source)
        })
        .collect()
}

/// Sample mean of the path payoffs and its standard error.
pub fn evaluate_cost_mc(ensemble: &PathEnsemble, spec: &ProblemSpec) -> Result<(f64, f64), SimulationError> {
    let payoffs = path_payoffs(ensemble, spec)?;
    let n = payoffs.len() as f64;
    let mean = compensated_sum(payoffs.iter().copied()) / n;
    if payoffs.len() < 2 {
        return Ok((mean, 0.0));
    }
    let var = compensated_sum(payoffs.iter().map(|p| (p - mean) * (p - mean))) / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Writes recorded paths as `path,t,x0[,x1],events` rows; events are
/// `I:<action>` or `II:<action>` entries joined by `;`.
pub fn write_paths_csv<W: Write>(ensemble: &PathEnsemble, mut out: W) -> Result<(), SimulationError> {
    let dim = ensemble.x0.len();
    let axes: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    writeln!(out, "path,t,{},events", axes.join(","))?;
    for p in &ensemble.paths {
        if p.states.is_empty() {
            return Err(SimulationError::Config("paths were not recorded".into()));
        }
        for (t, x) in ensemble.times.iter().zip(&p.states) {
            let mut events = Vec::new();
            for (tag, s) in [("II", &p.schedule_ii), ("I", &p.schedule_i)] {
                for e in s.events().iter().filter(|e| e.time == *t) {
                    let a: Vec<String> = e.action.iter().map(|v| format!("{v:?}")).collect();
                    events.push(format!("{tag}:{}", a.join(" ")));
                }
            }
            let coords: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{},{t:?},{},{}", p.id, coords.join(","), events.join(";"))?;
        }
    }
    Ok(())
}
