//! Double-obstacle projection and its per-level fixed point.

use crate::field::Region;
use crate::grid::{sup_diff, GridSlice, SpatialGrid};
use crate::intervention::{Intervention, ObstacleSlice};
use crate::problem::ProblemSpec;

use super::{SolverError, SolverOptions};

/// Projected slice with the clamp that set each node.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub slice: GridSlice,
    pub regions: Vec<Region>,
    pub actions: Vec<Option<usize>>,
    /// Fixed-point passes used to produce the slice.
    pub passes: usize,
}

/// `min(upper, max(cont, lower))` per node, with non-binding obstacles
/// skipped. The upper obstacle wins when the two clamps conflict. A node is
/// labelled by the clamp whose obstacle lies within the binding tolerance of
/// the projected value, player II first.
pub fn project_double_obstacle(cont: &GridSlice, lower: &ObstacleSlice, upper: &ObstacleSlice) -> Projection {
    let n = cont.values.len();
    let mut values = Vec::with_capacity(n);
    let mut regions = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n);
    for node in 0..n {
        let mut v = cont.values[node];
        if let Some(l) = lower.values[node] {
            v = v.max(l);
        }
        if let Some(u) = upper.values[node] {
            v = v.min(u);
        }
        let near = |o: Option<f64>, s: &ObstacleSlice| o.is_some_and(|o| (o - v).abs() <= s.binding_tol * (s.unit + v.abs()));
        let (r, a) = if near(upper.values[node], upper) {
            (Region::PlayerII, upper.best_action[node])
        } else if near(lower.values[node], lower) {
            (Region::PlayerI, lower.best_action[node])
        } else {
            (Region::Cont, None)
        };
        values.push(v);
        regions.push(r);
        actions.push(a);
    }
    Projection { slice: GridSlice::new(cont.grid.clone(), cont.time, values), regions, actions, passes: 1 }
}

/// Repeats the projection of `cont` with obstacles recomputed from the
/// current iterate until the sup-change drops below the tolerance.
pub fn obstacle_fixed_point(op: &Intervention, cont: &GridSlice, opts: &SolverOptions) -> Result<Projection, SolverError> {
    let mut current = cont.values.clone();
    let mut passes = 0;
    loop {
        let mut p = project_double_obstacle(cont, &op.lower(&current), &op.upper(&current));
        passes += 1;
        let change = sup_diff(&p.slice.values, &current);
        current = std::mem::take(&mut p.slice.values);
        let settled = if opts.exact_fixed_point { change == 0.0 } else { change <= opts.fixed_point_tol };
        if settled || passes >= opts.max_passes {
            if change > opts.divergence_tol {
                return Err(SolverError::NonConvergence { time: cont.time, passes, change });
            }
            p.slice.values = current;
            p.passes = passes;
            return Ok(p);
        }
    }
}

/// Terminal slice: `Φ` projected onto both obstacles at the horizon.
pub fn terminal_projection(spec: &ProblemSpec, grid: &SpatialGrid, opts: &SolverOptions) -> Result<Projection, SolverError> {
    let phi = GridSlice::from_fn(grid.clone(), spec.horizon, |x| spec.terminal_at(x))?;
    let op = Intervention::new(spec, grid, spec.horizon)?.with_binding_tol(opts.binding_tol);
    obstacle_fixed_point(&op, &phi, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{canonical, CoefficientForm, DiscreteImpulseSet, SetLabel};

    fn obstacle(values: &[Option<f64>]) -> ObstacleSlice {
        let n = values.len();
        ObstacleSlice { values: values.to_vec(), best_action: vec![Some(0); n], binding: vec![false; n], binding_tol: 1e-8, unit: 1.0 }
    }

    fn one_node(c: f64, l: Option<f64>, u: Option<f64>) -> (f64, Region) {
        let grid = SpatialGrid::from_box(&[[0.0, 0.0]], 1.0).unwrap();
        let p = project_double_obstacle(&GridSlice::new(grid, 0.0, vec![c]), &obstacle(&[l]), &obstacle(&[u]));
        (p.slice.values[0], p.regions[0])
    }

    #[test]
    fn clamp_cases() {
        assert_eq!(one_node(3.0, Some(4.0), Some(10.0)), (4.0, Region::PlayerI));
        assert_eq!(one_node(3.0, Some(1.0), Some(2.0)), (2.0, Region::PlayerII));
        assert_eq!(one_node(3.0, Some(5.0), Some(4.0)), (4.0, Region::PlayerII));
        assert_eq!(one_node(3.0, None, None), (3.0, Region::Cont));
        assert_eq!(one_node(3.0, Some(3.0), None), (3.0, Region::PlayerI));
        assert_eq!(one_node(3.0, Some(2.9), Some(3.1)), (3.0, Region::Cont));
    }

    pub(crate) fn hand_spec() -> ProblemSpec {
        let mut spec = canonical("P3").unwrap();
        spec.terminal = CoefficientForm::tabulated(&[vec![-2.0, 1.0, 2.0]], &[0.0, 0.0, 1.0]);
        spec.impulses_u = DiscreteImpulseSet::scalar(SetLabel::PlayerI, &[2.0]);
        spec.impulses_v = DiscreteImpulseSet::scalar(SetLabel::PlayerII, &[-2.0]);
        spec.domain = vec![[-2.0, 2.0]];
        spec
    }

    #[test]
    fn five_node_terminal_fixed_point() {
        let grid = SpatialGrid::from_box(&[[-2.0, 2.0]], 1.0).unwrap();
        let p = terminal_projection(&hand_spec(), &grid, &SolverOptions::default()).unwrap();
        assert_eq!(p.slice.values, vec![0.0, 0.0, 0.0, 0.0, 0.6]);
        assert_eq!(p.regions[4], Region::PlayerII);
        assert_eq!(p.actions[4], Some(0));
        assert!(p.regions[..4].iter().all(|&r| r == Region::Cont));
        assert_eq!(p.passes, 2);
    }

    #[test]
    fn prohibitive_costs_take_one_pass() {
        let spec = canonical("P1").unwrap();
        let grid = SpatialGrid::from_box(&spec.domain, 0.05).unwrap();
        let p = terminal_projection(&spec, &grid, &SolverOptions::default()).unwrap();
        assert_eq!(p.passes, 1);
        let phi = GridSlice::from_fn(grid, 1.0, |x| spec.terminal_at(x)).unwrap();
        assert_eq!(p.slice.values, phi.values);
    }

    #[test]
    fn zero_costs_fail_to_converge() {
        let mut spec = hand_spec();
        spec.cost = CoefficientForm::constant(0.0);
        spec.gain = CoefficientForm::constant(0.0);
        spec.impulses_u = DiscreteImpulseSet::scalar(SetLabel::PlayerI, &[1.0]);
        spec.impulses_v = DiscreteImpulseSet::scalar(SetLabel::PlayerII, &[1.0]);
        spec.terminal = CoefficientForm::linear(0.0, 0.0, &[1.0]);
        let grid = SpatialGrid::from_box(&[[-40.0, 40.0]], 0.25).unwrap();
        let opts = SolverOptions { max_passes: 5, ..SolverOptions::default() };
        assert!(matches!(terminal_projection(&spec, &grid, &opts), Err(SolverError::NonConvergence { .. })));
    }
}
