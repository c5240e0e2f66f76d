//! Interior gaps between two fields on possibly different grids.

use serde::{Deserialize, Serialize};

use crate::field::ValueField;

use super::IoError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Sup of `|a - b|` over every level of the finer field.
    pub sup: f64,
    pub mean: f64,
    /// Sup over the initial level only.
    pub initial_sup: f64,
    pub nodes: usize,
    pub interior_fraction: f64,
}

/// Coarser field evaluated at `(t, x)`: linear in time between its two
/// bracketing levels, multilinear in space.
fn sample(field: &ValueField, t: f64, x: &[f64]) -> Option<f64> {
    let grid = &field.grid;
    let mut s = (t / grid.dt()).clamp(0.0, grid.steps as f64);
    if (s - s.round()).abs() < 1e-9 {
        s = s.round();
    }
    let lo = (s.floor() as usize).min(grid.steps - 1);
    let w = s - lo as f64;
    let a = grid.space.interpolate(&field.values[lo], x)?;
    if w == 0.0 {
        return Some(a);
    }
    let b = grid.space.interpolate(&field.values[lo + 1], x)?;
    Some(a + w * (b - a))
}

/// Resamples the field with fewer space-time nodes onto the other and
/// measures the gap over the interior box of the finer one.
pub fn compare_fields(a: &ValueField, b: &ValueField, interior_fraction: f64) -> Result<GapReport, IoError> {
    let (sa, sb) = (&a.grid.space, &b.grid.space);
    if sa.dim() != sb.dim() {
        return Err(IoError::Incompatible(format!("dimensions {} and {}", sa.dim(), sb.dim())));
    }
    if (a.grid.horizon - b.grid.horizon).abs() > 1e-12 * a.grid.horizon.max(1.0) {
        return Err(IoError::Incompatible(format!("horizons {} and {}", a.grid.horizon, b.grid.horizon)));
    }
    for (x, y) in sa.axes.iter().zip(&sb.axes) {
        let slack = x.step.max(y.step) + 1e-9;
        if (x.min - y.min).abs() > slack || (x.max() - y.max()).abs() > slack {
            return Err(IoError::Incompatible(format!(
                "boxes [{}, {}] and [{}, {}] differ",
                x.min,
                x.max(),
                y.min,
                y.max()
            )));
        }
    }
    let size = |f: &ValueField| f.grid.space.len() * f.levels();
    let (fine, coarse) = if size(a) >= size(b) { (a, b) } else { (b, a) };
    let space = &fine.grid.space;
    let mask = space.interior_mask(interior_fraction);
    let mut x = vec![0.0; space.dim()];
    let (mut sup, mut initial_sup, mut total, mut nodes) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for k in 0..fine.levels() {
        let t = fine.grid.time(k);
        for node in (0..space.len()).filter(|&n| mask[n]) {
            space.coords(node, &mut x);
            let other = sample(coarse, t, &x).ok_or_else(|| {
                IoError::Incompatible(format!("interior point {x:?} lies outside the other field's box"))
            })?;
            let gap = (fine.values[k][node] - other).abs();
            sup = sup.max(gap);
            if k == 0 {
                initial_sup = initial_sup.max(gap);
            }
            total += gap;
            nodes += 1;
        }
    }
    Ok(GapReport { sup, mean: total / nodes.max(1) as f64, initial_sup, nodes, interior_fraction })
}
