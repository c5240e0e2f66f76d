//! Discrete residual of the quasi-variational inequality and the
//! exponential time rescaling `W = e^{θt} V`.

use rayon::prelude::*;

use crate::field::{Region, ValueField};
use crate::intervention::Intervention;
use crate::problem::ProblemSpec;

use super::scheme::local_generator;
use super::SolverError;

/// Share of each axis, centered, over which norms are taken.
pub const INTERIOR_FRACTION: f64 = 0.8;

/// Signed residual per level (all levels but the last) and node.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField {
    pub residual: Vec<Vec<f64>>,
    /// Sup of `|residual|` over the interior box, per level.
    pub level_sup: Vec<f64>,
    pub sup_norm: f64,
    /// Interior sup restricted to each region, ordered as `Region::ALL`.
    pub region_sup: [f64; 3],
    pub interior_fraction: f64,
}

/// `max{V - ℳ⁺V, min{-∂tV - H, V - ℳ⁻V}}` at every node of every level,
/// with a forward time difference and the solver's spatial stencils.
pub fn qvi_residual(spec: &ProblemSpec, field: &ValueField) -> Result<ResidualField, SolverError> {
    scaled_qvi_residual(spec, field, 0.0, INTERIOR_FRACTION)
}

/// Residual of the rescaled inequality satisfied by `W = e^{θt} V`: the
/// time difference becomes `(e^{-θ dt} W_{k+1} - W_k) / dt`, intervention
/// costs are multiplied by `e^{θt}` and the driver becomes
/// `e^{θt} f(t, x, e^{-θt} W, e^{-θt} DW σ)`. With `θ = 0` this is the plain
/// residual of `field`.
pub fn scaled_qvi_residual(
    spec: &ProblemSpec,
    field: &ValueField,
    theta: f64,
    interior_fraction: f64,
) -> Result<ResidualField, SolverError> {
    let grid = &field.grid;
    let space = &grid.space;
    if field.levels() < 2 {
        return Err(SolverError::Config("residual needs at least two time levels".into()));
    }
    let dt = grid.dt();
    let decay = (-theta * dt).exp();
    let mask = space.interior_mask(interior_fraction);
    let mut residual = Vec::with_capacity(grid.steps);
    for k in 0..grid.steps {
        let t = grid.time(k);
        let scale = (theta * t).exp();
        let op = Intervention::new(spec, space, t)?.scaled(scale);
        let w = &field.values[k];
        let w_next = &field.values[k + 1];
        let lower = op.lower(w);
        let upper = op.upper(w);
        let level = (0..space.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; spec.dim],
                |x, node| {
                    let g = local_generator(spec, space, node, t, x)?;
                    let w0 = w[node];
                    let linear: f64 = g.terms().iter().map(|&(j, r)| r * (w[j] - w0)).sum();
                    let z: Vec<f64> = g.z(w, spec.dim, spec.noise_dim).into_iter().map(|v| v / scale).collect();
                    let driver = scale * spec.driver_at(t, x, w0 / scale, &z)?;
                    let pde = -(decay * w_next[node] - w0) / dt - (linear + driver);
                    let inner = match lower.values[node] {
                        Some(l) => pde.min(w0 - l),
                        None => pde,
                    };
                    Ok(match upper.values[node] {
                        Some(u) => (w0 - u).max(inner),
                        None => inner,
                    })
                },
            )
            .collect::<Result<Vec<f64>, SolverError>>()?;
        residual.push(level);
    }
    let mut region_sup = [0.0f64; 3];
    let level_sup: Vec<f64> = residual
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let mut sup = 0.0f64;
            for (node, &v) in r.iter().enumerate() {
                if mask[node] {
                    sup = sup.max(v.abs());
                    let reg = field.regions[k][node].index();
                    region_sup[reg] = region_sup[reg].max(v.abs());
                }
            }
            sup
        })
        .collect();
    let sup_norm = level_sup.iter().cloned().fold(0.0, f64::max);
    Ok(ResidualField { residual, level_sup, sup_norm, region_sup, interior_fraction })
}

/// `W = e^{θt} V` level by level; labels are copied unchanged.
pub fn theta_transform(field: &ValueField, theta: f64) -> ValueField {
    let mut out = field.clone();
    for (k, level) in out.values.iter_mut().enumerate() {
        let scale = (theta * field.grid.time(k)).exp();
        level.iter_mut().for_each(|v| *v *= scale);
    }
    out
}

/// Interior sup of the residual restricted to one region.
pub fn region_sup(res: &ResidualField, region: Region) -> f64 {
    res.region_sup[region.index()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{SpaceTimeGrid, SpatialGrid};
    use crate::problem::{canonical, CoefficientForm, DiscreteImpulseSet, SetLabel};

    #[test]
    fn three_node_hand_residual() {
        let mut spec = canonical("P0").unwrap();
        spec.impulses_u = DiscreteImpulseSet::scalar(SetLabel::PlayerI, &[1.0]);
        spec.impulses_v = DiscreteImpulseSet::scalar(SetLabel::PlayerII, &[-1.0]);
        spec.cost = CoefficientForm::constant(0.1);
        spec.gain = CoefficientForm::constant(0.2);
        let space = SpatialGrid::from_box(&[[0.0, 2.0]], 1.0).unwrap();
        let grid = SpaceTimeGrid::new(space, 1.0, 1).unwrap();
        let field = ValueField::unlabeled(grid, vec![vec![0.0, 1.0, 0.0]; 2]);
        let res = scaled_qvi_residual(&spec, &field, 0.0, 1.0).unwrap();
        assert!((res.residual[0][0] + 0.9).abs() < 1e-15);
    }

    #[test]
    fn theta_transform_scales_levels() {
        let space = SpatialGrid::from_box(&[[0.0, 1.0]], 1.0).unwrap();
        let grid = SpaceTimeGrid::new(space, 1.0, 1).unwrap();
        let field = ValueField::unlabeled(grid, vec![vec![1.0; 2]; 2]);
        assert_eq!(theta_transform(&field, 0.0), field);
        let w = theta_transform(&field, std::f64::consts::LN_2);
        assert_eq!(w.values[1], vec![2.0, 2.0]);
        assert_eq!(w.values[0], vec![1.0, 1.0]);
    }
}
