//! Explicit monotone finite-difference scheme for the continuation part.
//!
//! The discrete generator at a node is a list of `(neighbour, rate)` pairs:
//! `L V = Σ rate (V[neighbour] - V[node])`. Drift uses the upwind neighbour,
//! diffusion central second differences. At a boundary node the second
//! difference becomes the one-sided `2 (V[1] - V[0]) / h²` and a drift whose
//! upwind neighbour is missing is dropped. In two dimensions the mixed
//! derivative uses the central four-point stencil, which is not monotone when
//! the diffusion has off-diagonal entries.

use rayon::prelude::*;

use crate::grid::{GridSlice, SpaceTimeGrid, SpatialGrid};
use crate::problem::{ProblemError, ProblemSpec};

use super::SolverError;

const MAX_TERMS: usize = 8;
const CFL_EPS: f64 = 1e-12;

/// `⟨b, p⟩ + ½ tr(σσᵀ Q) + f(t, x, y, pσ)` with `Q` given row-major.
pub fn hamiltonian(spec: &ProblemSpec, t: f64, x: &[f64], y: f64, p: &[f64], q: &[f64]) -> Result<f64, ProblemError> {
    let (n, d) = (spec.dim, spec.noise_dim);
    let mut b = vec![0.0; n];
    let mut sigma = vec![0.0; n * d];
    spec.drift_at(t, x, &mut b)?;
    spec.sigma_at(t, x, &mut sigma)?;
    let a = diffusion_matrix(&sigma, n, d);
    let transport: f64 = b.iter().zip(p).map(|(b, p)| b * p).sum();
    let trace: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| a[i * n + j] * q[j * n + i]).sum();
    let z = row_times_sigma(p, &sigma, n, d);
    Ok(transport + 0.5 * trace + spec.driver_at(t, x, y, &z)?)
}

/// `σσᵀ`, row-major `n × n`.
pub fn diffusion_matrix(sigma: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = (0..d).map(|k| sigma[i * d + k] * sigma[j * d + k]).sum();
        }
    }
    a
}

/// `p σ` for a row vector `p`.
pub fn row_times_sigma(p: &[f64], sigma: &[f64], n: usize, d: usize) -> Vec<f64> {
    (0..d).map(|k| (0..n).map(|i| p[i] * sigma[i * d + k]).sum()).collect()
}

/// Largest `dt` allowed by the CFL bound for the given coefficient maxima.
pub fn cfl_dt(dim: usize, min_step: f64, max_diffusion: f64, max_drift: f64, safety: f64) -> f64 {
    safety * min_step * min_step / (dim as f64 * max_diffusion + max_drift * min_step + CFL_EPS)
}

/// Largest diagonal diffusion entry and drift component over the nodes of
/// `grid`, sampled at `times`.
pub fn coefficient_maxima(spec: &ProblemSpec, grid: &SpatialGrid, times: &[f64]) -> Result<(f64, f64), ProblemError> {
    let (n, d) = (spec.dim, spec.noise_dim);
    let per_node = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let x = grid.coords_vec(node);
            let mut b = vec![0.0; n];
            let mut sigma = vec![0.0; n * d];
            let (mut amax, mut bmax) = (0.0f64, 0.0f64);
            for &t in times {
                spec.drift_at(t, &x, &mut b)?;
                spec.sigma_at(t, &x, &mut sigma)?;
                amax = spec.diffusion_diag(&sigma).into_iter().fold(amax, f64::max);
                bmax = b.iter().fold(bmax, |m, v| m.max(v.abs()));
            }
            Ok((amax, bmax))
        })
        .collect::<Result<Vec<_>, ProblemError>>()?;
    Ok(per_node.into_iter().fold((0.0, 0.0), |(a, b), (x, y)| (a.max(x), b.max(y))))
}

/// Time grid for the explicit scheme: the fewest uniform steps satisfying the
/// CFL bound with the given safety factor.
pub fn pde_grid(spec: &ProblemSpec, space: SpatialGrid, cfl_safety: f64) -> Result<SpaceTimeGrid, SolverError> {
    if !(cfl_safety > 0.0 && cfl_safety <= 1.0) {
        return Err(SolverError::Config(format!("cfl_safety must lie in (0, 1], got {cfl_safety}")));
    }
    let times: Vec<f64> = if spec.dynamics_time_independent() {
        vec![0.0]
    } else {
        (0..=16).map(|k| spec.horizon * k as f64 / 16.0).collect()
    };
    let (amax, bmax) = coefficient_maxima(spec, &space, &times)?;
    let dt = cfl_dt(spec.dim, space.min_step(), amax, bmax, cfl_safety);
    let steps = ((spec.horizon / dt - 1e-9).ceil() as usize).max(1);
    Ok(SpaceTimeGrid::new(space, spec.horizon, steps)?)
}

/// Discrete generator at one node, frozen coefficients included.
#[derive(Debug, Clone)]
pub(crate) struct LocalGenerator {
    terms: [(usize, f64); MAX_TERMS],
    len: usize,
    /// Per axis `(upper node, lower node, spacing)` of the gradient stencil.
    gradient: [Option<(usize, usize, f64)>; 2],
    sigma: Vec<f64>,
    /// Local CFL limit on `dt`.
    pub dt_limit: f64,
}

impl LocalGenerator {
    fn push(&mut self, node: usize, rate: f64) {
        if rate != 0.0 {
            self.terms[self.len] = (node, rate);
            self.len += 1;
        }
    }

    pub fn terms(&self) -> &[(usize, f64)] {
        &self.terms[..self.len]
    }

    pub fn rate_sum(&self) -> f64 {
        self.terms().iter().map(|t| t.1).sum()
    }

    pub fn gradient(&self, values: &[f64], dim: usize) -> [f64; 2] {
        let mut p = [0.0; 2];
        for (i, g) in self.gradient.iter().take(dim).enumerate() {
            if let Some((hi, lo, h)) = *g {
                p[i] = (values[hi] - values[lo]) / h;
            }
        }
        p
    }

    /// `z = DV σ` from the stencil gradient of `values`.
    pub fn z(&self, values: &[f64], dim: usize, noise_dim: usize) -> Vec<f64> {
        let p = self.gradient(values, dim);
        row_times_sigma(&p[..dim], &self.sigma, dim, noise_dim)
    }
}

/// Builds the generator for `node` from the coefficients at `(t, x_node)`.
pub(crate) fn local_generator(
    spec: &ProblemSpec,
    grid: &SpatialGrid,
    node: usize,
    t: f64,
    x: &mut [f64],
) -> Result<LocalGenerator, ProblemError> {
    let (n, d) = (spec.dim, spec.noise_dim);
    grid.coords(node, x);
    let mut b = [0.0; 2];
    let mut sigma = vec![0.0; n * d];
    spec.drift_at(t, x, &mut b[..n])?;
    spec.sigma_at(t, x, &mut sigma)?;
    let a = diffusion_matrix(&sigma, n, d);
    let idx = grid.multi_index(node);
    let mut g = LocalGenerator {
        terms: [(0, 0.0); MAX_TERMS],
        len: 0,
        gradient: [None; 2],
        sigma,
        dt_limit: f64::INFINITY,
    };
    let mut amax = 0.0f64;
    let mut bmax = 0.0f64;
    let mut inside = [false; 2];
    for i in 0..n {
        let axis = grid.axes[i];
        let h = axis.step;
        let stride = grid.stride(i);
        let has_lo = idx[i] > 0;
        let has_hi = idx[i] + 1 < axis.count;
        let (aii, bi) = (a[i * n + i], b[i]);
        amax = amax.max(aii);
        bmax = bmax.max(bi.abs());
        match (has_lo, has_hi) {
            (true, true) => {
                inside[i] = true;
                g.push(node + stride, 0.5 * aii / (h * h));
                g.push(node - stride, 0.5 * aii / (h * h));
                if bi > 0.0 {
                    g.push(node + stride, bi / h);
                    g.gradient[i] = Some((node + stride, node, h));
                } else if bi < 0.0 {
                    g.push(node - stride, -bi / h);
                    g.gradient[i] = Some((node, node - stride, h));
                } else {
                    g.gradient[i] = Some((node + stride, node - stride, 2.0 * h));
                }
            }
            (false, true) => {
                g.push(node + stride, aii / (h * h));
                if bi > 0.0 {
                    g.push(node + stride, bi / h);
                }
                g.gradient[i] = Some((node + stride, node, h));
            }
            (true, false) => {
                g.push(node - stride, aii / (h * h));
                if bi < 0.0 {
                    g.push(node - stride, -bi / h);
                }
                g.gradient[i] = Some((node, node - stride, h));
            }
            (false, false) => {}
        }
    }
    if n == 2 && inside[0] && inside[1] && a[1] != 0.0 {
        let (s0, s1) = (grid.stride(0), grid.stride(1));
        let r = a[1] / (4.0 * grid.axes[0].step * grid.axes[1].step);
        g.push(node + s0 + s1, r);
        g.push(node - s0 - s1, r);
        g.push(node + s0 - s1, -r);
        g.push(node - s0 + s1, -r);
    }
    g.dt_limit = cfl_dt(n, grid.min_step(), amax, bmax, 1.0);
    Ok(g)
}

/// One explicit step from `next` (at `t + dt`) back to `t`, without
/// obstacles. Coefficients are frozen at `t + dt`. The update is written as
/// a nonnegative combination of neighbour values so the step is monotone in
/// floating point whenever the driver does not depend on `y`.
pub fn step_backward(spec: &ProblemSpec, grid: &SpaceTimeGrid, next: &GridSlice) -> Result<GridSlice, SolverError> {
    let dt = grid.dt();
    let level = (next.time / dt).round() as usize;
    if level == 0 || level > grid.steps {
        return Err(SolverError::Config(format!("no level precedes time {}", next.time)));
    }
    let space = &grid.space;
    let t = next.time;
    let values = &next.values;
    let out = (0..space.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; spec.dim],
            |x, node| {
                let g = local_generator(spec, space, node, t, x)?;
                if dt > g.dt_limit * (1.0 + 1e-12) {
                    return Err(SolverError::Cfl { time: t, dt, limit: g.dt_limit });
                }
                let w0 = 1.0 - dt * g.rate_sum();
                let mut acc = w0 * values[node];
                for &(j, r) in g.terms() {
                    acc += (dt * r) * values[j];
                }
                let z = g.z(values, spec.dim, spec.noise_dim);
                Ok(acc + dt * spec.driver_at(t, x, values[node], &z)?)
            },
        )
        .collect::<Result<Vec<f64>, SolverError>>()?;
    Ok(GridSlice::new(space.clone(), grid.time(level - 1), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{canonical, CoefficientForm};
    use proptest::prelude::*;

    fn transport_spec(b: f64, sigma: f64) -> ProblemSpec {
        let mut spec = canonical("P1").unwrap();
        spec.drift = vec![CoefficientForm::constant(b)];
        spec.volatility = vec![CoefficientForm::constant(sigma)];
        spec
    }

    fn grid(steps: usize) -> SpaceTimeGrid {
        SpaceTimeGrid::new(SpatialGrid::from_box(&[[-1.0, 1.0]], 0.125).unwrap(), steps as f64 * 0.01, steps).unwrap()
    }

    #[test]
    fn hamiltonian_examples() {
        let mut spec = transport_spec(1.0, 1.0);
        assert_eq!(hamiltonian(&spec, 0.0, &[0.0], 0.0, &[2.0], &[4.0]).unwrap(), 4.0);
        spec = transport_spec(0.0, 0.0);
        spec.driver = CoefficientForm::affine_in_y(0.0, -0.1);
        assert_eq!(hamiltonian(&spec, 0.0, &[0.0], 10.0, &[3.0], &[1.0]).unwrap(), -1.0);

        let mut spec = canonical("P1").unwrap();
        spec.dim = 2;
        spec.noise_dim = 2;
        spec.drift = vec![CoefficientForm::constant(1.0); 2];
        spec.volatility = [1.0, 0.0, 0.0, 1.0].iter().map(|&s| CoefficientForm::constant(s)).collect();
        let h = hamiltonian(&spec, 0.0, &[0.0, 0.0], 0.0, &[1.0, -1.0], &[2.0, 0.0, 0.0, 4.0]).unwrap();
        assert_eq!(h, 3.0);
    }

    #[test]
    fn constant_slice_is_stationary() {
        let g = grid(1);
        let next = GridSlice::constant(g.space.clone(), g.horizon, 2.5);
        let out = step_backward(&transport_spec(0.3, 0.8), &g, &next).unwrap();
        assert!(out.values.iter().all(|&v| (v - 2.5).abs() < 1e-14));
        assert_eq!(out.time, 0.0);
    }

    #[test]
    fn linear_and_quadratic_slices() {
        let g = grid(1);
        let lin = GridSlice::from_fn(g.space.clone(), g.horizon, |x| Ok::<_, ()>(x[0])).unwrap();
        let out = step_backward(&transport_spec(1.0, 0.0), &g, &lin).unwrap();
        for j in 1..g.space.len() - 1 {
            assert!((out.values[j] - lin.values[j] - 0.01).abs() < 1e-14);
        }
        let quad = GridSlice::from_fn(g.space.clone(), g.horizon, |x| Ok::<_, ()>(x[0] * x[0])).unwrap();
        let out = step_backward(&transport_spec(0.0, 1.0), &g, &quad).unwrap();
        for j in 1..g.space.len() - 1 {
            assert!((out.values[j] - quad.values[j] - 0.01).abs() < 1e-14);
        }
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = SpaceTimeGrid::new(SpatialGrid::from_box(&[[-1.0, 1.0]], 0.05).unwrap(), 1.0, 10).unwrap();
        let next = GridSlice::constant(g.space.clone(), 1.0, 0.0);
        assert!(matches!(step_backward(&transport_spec(0.0, 1.0), &g, &next), Err(SolverError::Cfl { .. })));
    }

    #[test]
    fn pde_grid_respects_cfl() {
        let spec = canonical("P1").unwrap();
        let space = SpatialGrid::from_box(&[[-1.0, 1.0]], 0.05).unwrap();
        let g = pde_grid(&spec, space, 0.9).unwrap();
        assert!(g.dt() <= 0.9 * 0.0025 + 1e-15);
        assert_eq!(g.steps, 445);
        let frozen = pde_grid(&canonical("P0").unwrap(), g.space.clone(), 0.9).unwrap();
        assert_eq!(frozen.steps, 1);
    }

    proptest! {
        #[test]
        fn step_is_monotone(
            a in prop::collection::vec(-3.0f64..3.0, 17),
            bump in prop::collection::vec(0.0f64..1.0, 17),
            b in -2.0f64..2.0,
            s in 0.0f64..1.5,
        ) {
            let space = SpatialGrid::from_box(&[[-1.0, 1.0]], 0.125).unwrap();
            let spec = transport_spec(b, s);
            let g = pde_grid(&spec, space, 0.9).unwrap();
            let hi: Vec<f64> = a.iter().zip(&bump).map(|(x, d)| x + d).collect();
            let lo_out = step_backward(&spec, &g, &GridSlice::new(g.space.clone(), g.horizon, a.clone())).unwrap();
            let hi_out = step_backward(&spec, &g, &GridSlice::new(g.space.clone(), g.horizon, hi)).unwrap();
            for (l, h) in lo_out.values.iter().zip(&hi_out.values) {
                prop_assert!(l <= h);
            }
        }
    }
}
