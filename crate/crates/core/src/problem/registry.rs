//! Canonical test problems, loadable by name.

use std::f64::consts::PI;

use super::{CoefficientForm, DiscreteImpulseSet, ProblemError, ProblemSpec, SetLabel};

const NAMES: [&str; 4] = ["P0", "P1", "P2", "P3"];

pub fn canonical_names() -> &'static [&'static str] {
    &NAMES
}

/// Default state box `[-4π, 4π]` per axis.
pub fn default_box(dim: usize) -> Vec<[f64; 2]> {
    vec![[-4.0 * PI, 4.0 * PI]; dim]
}

fn shift_sets() -> (DiscreteImpulseSet, DiscreteImpulseSet) {
    let up: Vec<f64> = (1..=6).map(|k| 0.5 * k as f64).collect();
    let down: Vec<f64> = up.iter().map(|s| -s).collect();
    (
        DiscreteImpulseSet::scalar(SetLabel::PlayerI, &up),
        DiscreteImpulseSet::scalar(SetLabel::PlayerII, &down),
    )
}

#[allow(clippy::too_many_arguments)]
fn one_dim(
    name: &str,
    sigma: f64,
    driver: CoefficientForm,
    terminal: CoefficientForm,
    cost: f64,
    gain: f64,
    h: f64,
) -> ProblemSpec {
    let (impulses_u, impulses_v) = shift_sets();
    ProblemSpec {
        name: name.to_string(),
        dim: 1,
        noise_dim: 1,
        horizon: 1.0,
        drift: vec![CoefficientForm::constant(0.0)],
        volatility: vec![CoefficientForm::constant(sigma)],
        driver,
        terminal,
        cost: CoefficientForm::constant(cost),
        gain: CoefficientForm::constant(gain),
        impulses_u,
        impulses_v,
        h_floor: CoefficientForm::constant(h),
        domain: default_box(1),
    }
}

/// Looks up a canonical problem.
///
/// * `P0` frozen: no dynamics, `Φ ≡ 1`, prohibitive costs `c ≡ 10³`, `χ ≡ 900`.
/// * `P1` heat: `σ = 1`, `Φ = cos x`, `c ≡ 10`, `χ ≡ 9`.
/// * `P2` discount: `P1` with `f = -0.1 y`.
/// * `P3` game: `σ = 0.5`, `Φ = cos x`, `c ≡ 1`, `χ ≡ 0.6`, `h ≡ 0.3`.
///
/// All four use `U = {0.5, 1.0, .., 3.0}`, `V = -U` and `T = 1`.
pub fn canonical(name: &str) -> Result<ProblemSpec, ProblemError> {
    let zero = CoefficientForm::constant(0.0);
    let cos = CoefficientForm::cosine(1.0, 1.0);
    let spec = match name {
        "P0" => one_dim("P0", 0.0, zero, CoefficientForm::constant(1.0), 1.0e3, 0.9e3, 50.0),
        "P1" => one_dim("P1", 1.0, zero, cos, 10.0, 9.0, 0.5),
        "P2" => one_dim("P2", 1.0, CoefficientForm::affine_in_y(0.0, -0.1), cos, 10.0, 9.0, 0.5),
        "P3" => one_dim("P3", 0.5, zero, cos, 1.0, 0.6, 0.3),
        other => return Err(ProblemError::UnknownProblem(other.to_string())),
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_is_complete_and_valid() {
        for name in canonical_names() {
            let spec = canonical(name).unwrap();
            spec.check().unwrap();
            assert_eq!(spec.impulses_u.len(), 6);
        }
        assert!(canonical("P9").is_err());
    }
}
