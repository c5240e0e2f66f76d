//! Game instances: coefficients, impulse costs, impulse sets and horizon.

mod assumptions;
mod forms;
mod registry;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assumptions::{validate_assumptions, AssumptionId, AssumptionReport, Witness};
pub use forms::{CoefficientForm, FormKind};
pub use registry::{canonical, canonical_names, default_box};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("invalid {kind} parameters: {reason}")]
    BadParams { kind: &'static str, reason: String },
    #[error("axis {axis}: {value} outside the tabulated box [{lo}, {hi}]")]
    Domain { axis: usize, value: f64, lo: f64, hi: f64 },
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("unknown canonical problem `{0}`")]
    UnknownProblem(String),
}

/// Which player owns an impulse set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetLabel {
    /// Player I, the maximizer, pays `c`.
    #[serde(rename = "U_player_I")]
    PlayerI,
    /// Player II, the minimizer, pays `χ`.
    #[serde(rename = "V_player_II")]
    PlayerII,
}

/// Finite list of admissible impulse shifts for one player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteImpulseSet {
    pub label: SetLabel,
    pub actions: Vec<Vec<f64>>,
}

impl DiscreteImpulseSet {
    pub fn new(label: SetLabel, actions: Vec<Vec<f64>>) -> Self {
        Self { label, actions }
    }

    pub fn empty(label: SetLabel) -> Self {
        Self { label, actions: Vec::new() }
    }

    /// One-dimensional set from scalar shifts.
    pub fn scalar(label: SetLabel, shifts: &[f64]) -> Self {
        Self::new(label, shifts.iter().map(|&s| vec![s]).collect())
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Index of an action equal to `a` up to `tol` per component.
    pub fn position(&self, a: &[f64], tol: f64) -> Option<usize> {
        self.actions
            .iter()
            .position(|b| b.len() == a.len() && b.iter().zip(a).all(|(x, y)| (x - y).abs() <= tol))
    }

    fn check(&self, dim: usize) -> Result<(), ProblemError> {
        for (i, a) in self.actions.iter().enumerate() {
            if a.len() != dim || a.iter().any(|v| !v.is_finite()) {
                return Err(ProblemError::Invalid(format!(
                    "{:?} action {i} must be a finite {dim}-vector",
                    self.label
                )));
            }
            if self.actions[..i].iter().any(|b| b == a) {
                return Err(ProblemError::Invalid(format!("{:?} action {a:?} is duplicated", self.label)));
            }
        }
        Ok(())
    }
}

/// Immutable description of one game instance.
///
/// `volatility` holds the `dim × noise_dim` matrix `σ` row-major. `domain`
/// is the declared state box: every form must be total on it, and the
/// assumption validator samples inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    pub dim: usize,
    pub noise_dim: usize,
    pub horizon: f64,
    pub drift: Vec<CoefficientForm>,
    pub volatility: Vec<CoefficientForm>,
    pub driver: CoefficientForm,
    pub terminal: CoefficientForm,
    pub cost: CoefficientForm,
    pub gain: CoefficientForm,
    pub impulses_u: DiscreteImpulseSet,
    pub impulses_v: DiscreteImpulseSet,
    pub h_floor: CoefficientForm,
    pub domain: Vec<[f64; 2]>,
}

/// All four coefficient groups at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub drift: Vec<f64>,
    /// Row-major `dim × noise_dim`.
    pub sigma: Vec<f64>,
    pub driver: f64,
    pub terminal: f64,
}

impl ProblemSpec {
    /// Structural checks: dimensions, arities, set shapes.
    pub fn check(&self) -> Result<(), ProblemError> {
        let (n, d) = (self.dim, self.noise_dim);
        if n == 0 || d == 0 {
            return Err(ProblemError::Invalid("dimensions must be at least 1".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(ProblemError::Invalid("horizon must be positive and finite".into()));
        }
        if self.drift.len() != n {
            return Err(ProblemError::Invalid(format!("drift needs {n} components")));
        }
        if self.volatility.len() != n * d {
            return Err(ProblemError::Invalid(format!("volatility needs {} entries", n * d)));
        }
        if self.domain.len() != n || self.domain.iter().any(|b| !(b[0] < b[1]) || !b[0].is_finite() || !b[1].is_finite()) {
            return Err(ProblemError::Invalid(format!("domain needs {n} finite intervals lo < hi")));
        }
        for form in self
            .drift
            .iter()
            .chain(&self.volatility)
            .chain([&self.driver, &self.terminal, &self.cost, &self.gain, &self.h_floor])
        {
            form.check_arity(n, d)?;
        }
        if self.impulses_u.label != SetLabel::PlayerI || self.impulses_v.label != SetLabel::PlayerII {
            return Err(ProblemError::Invalid("impulse set labels are swapped".into()));
        }
        self.impulses_u.check(n)?;
        self.impulses_v.check(n)?;
        Ok(())
    }

    pub fn drift_at(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), ProblemError> {
        for (o, form) in out.iter_mut().zip(&self.drift) {
            *o = form.eval(t, x, 0.0, &[])?;
        }
        Ok(())
    }

    pub fn sigma_at(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), ProblemError> {
        for (o, form) in out.iter_mut().zip(&self.volatility) {
            *o = form.eval(t, x, 0.0, &[])?;
        }
        Ok(())
    }

    pub fn driver_at(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> Result<f64, ProblemError> {
        self.driver.eval(t, x, y, z)
    }

    pub fn terminal_at(&self, x: &[f64]) -> Result<f64, ProblemError> {
        self.terminal.eval(self.horizon, x, 0.0, &[])
    }

    /// Player I's cost `c(t, y)` of action `y`.
    pub fn cost_at(&self, t: f64, action: &[f64]) -> Result<f64, ProblemError> {
        self.cost.eval(t, action, 0.0, &[])
    }

    /// Player II's cost `χ(t, z)` of action `z`.
    pub fn gain_at(&self, t: f64, action: &[f64]) -> Result<f64, ProblemError> {
        self.gain.eval(t, action, 0.0, &[])
    }

    pub fn h_at(&self, t: f64) -> Result<f64, ProblemError> {
        self.h_floor.eval(t, &vec![0.0; self.dim], 0.0, &[])
    }

    /// Diagonal of `σσᵀ` at a point.
    pub fn diffusion_diag(&self, sigma: &[f64]) -> Vec<f64> {
        let d = self.noise_dim;
        (0..self.dim)
            .map(|i| sigma[i * d..(i + 1) * d].iter().map(|s| s * s).sum())
            .collect()
    }

    /// True when drift and volatility do not depend on time.
    pub fn dynamics_time_independent(&self) -> bool {
        self.drift.iter().chain(&self.volatility).all(CoefficientForm::is_time_independent)
    }

    /// Lipschitz constant of the driver in `(y, z)`.
    pub fn driver_lipschitz(&self) -> f64 {
        self.driver.yz_lipschitz()
    }
}

/// Evaluates `b`, `σ`, `f` and `Φ` at one point.
pub fn evaluate_coefficients(
    spec: &ProblemSpec,
    t: f64,
    x: &[f64],
    y: f64,
    z: &[f64],
) -> Result<Coefficients, ProblemError> {
    if !(0.0..=spec.horizon).contains(&t) {
        return Err(ProblemError::TimeOutOfRange { t, horizon: spec.horizon });
    }
    if x.len() != spec.dim || x.iter().any(|v| !v.is_finite()) {
        return Err(ProblemError::Invalid(format!("state must be a finite {}-vector", spec.dim)));
    }
    let mut drift = vec![0.0; spec.dim];
    let mut sigma = vec![0.0; spec.dim * spec.noise_dim];
    spec.drift_at(t, x, &mut drift)?;
    spec.sigma_at(t, x, &mut sigma)?;
    Ok(Coefficients {
        drift,
        sigma,
        driver: spec.driver_at(t, x, y, z)?,
        terminal: spec.terminal_at(x)?,
    })
}
