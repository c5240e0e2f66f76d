//! Uniform tensor grids in one or two space dimensions.
//!
//! Grids built from a box are anchored at the origin: nodes sit at integer
//! multiples of the step, so the origin is a node whenever the box contains
//! it and shifts that are multiples of the step map nodes onto nodes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative distance below which a position counts as on-node.
const SNAP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("axis box [{lo}, {hi}] contains no node at step {step}")]
    EmptyAxis { lo: f64, hi: f64, step: f64 },
    #[error("grids of dimension {0} are not supported (1 or 2)")]
    Dimension(usize),
    #[error("time grid needs at least one step")]
    NoSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub step: f64,
    pub count: usize,
}

impl Axis {
    /// Nodes `k * step` for the integers `k` with `lo <= k * step <= hi`.
    pub fn anchored(lo: f64, hi: f64, step: f64) -> Result<Self, GridError> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(GridError::BadStep(step));
        }
        let first = (lo / step - SNAP).ceil() as i64;
        let last = (hi / step + SNAP).floor() as i64;
        if last < first {
            return Err(GridError::EmptyAxis { lo, hi, step });
        }
        Ok(Self { min: first as f64 * step, step, count: (last - first + 1) as usize })
    }

    pub fn coord(&self, j: usize) -> f64 {
        self.min + j as f64 * self.step
    }

    pub fn max(&self) -> f64 {
        self.coord(self.count - 1)
    }
}

/// Row-major node ordering: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub axes: Vec<Axis>,
}

/// Precomputed lookup of `V(x + shift)` for a fixed shift on a uniform grid:
/// per axis an integer node offset and the fractional weight of the next
/// node (zero when the shift is grid-aligned).
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftStencil {
    offsets: Vec<(i64, f64)>,
}

impl SpatialGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self, GridError> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(GridError::Dimension(axes.len()));
        }
        Ok(Self { axes })
    }

    /// Origin-anchored grid covering `bounds` with the same step per axis.
    pub fn from_box(bounds: &[[f64; 2]], step: f64) -> Result<Self, GridError> {
        Self::new(bounds.iter().map(|b| Axis::anchored(b[0], b[1], step)).collect::<Result<_, _>>()?)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn min_step(&self) -> f64 {
        self.axes.iter().map(|a| a.step).fold(f64::INFINITY, f64::min)
    }

    /// Per-axis indices of a node.
    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        match self.axes.len() {
            1 => [node, 0],
            _ => [node / self.axes[1].count, node % self.axes[1].count],
        }
    }

    pub fn node_at(&self, idx: [usize; 2]) -> usize {
        match self.axes.len() {
            1 => idx[0],
            _ => idx[0] * self.axes[1].count + idx[1],
        }
    }

    /// Stride (in flat node index) of one step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        if axis + 1 == self.axes.len() {
            1
        } else {
            self.axes[1].count
        }
    }

    pub fn coords(&self, node: usize, out: &mut [f64]) {
        let idx = self.multi_index(node);
        for (a, axis) in self.axes.iter().enumerate() {
            out[a] = axis.coord(idx[a]);
        }
    }

    pub fn coords_vec(&self, node: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.coords(node, &mut out);
        out
    }

    /// True when both grids have the same axes (bitwise).
    pub fn same_as(&self, other: &SpatialGrid) -> bool {
        self == other
    }

    pub fn shift_stencil(&self, shift: &[f64]) -> ShiftStencil {
        let offsets = self
            .axes
            .iter()
            .zip(shift)
            .map(|(axis, &s)| {
                let pos = s / axis.step;
                let r = pos.round();
                if (pos - r).abs() <= SNAP * r.abs().max(1.0) {
                    (r as i64, 0.0)
                } else {
                    let f = pos.floor();
                    (f as i64, pos - f)
                }
            })
            .collect();
        ShiftStencil { offsets }
    }

    /// `V(x_node + shift)` by multilinear interpolation, or `None` when the
    /// shifted point leaves the grid box.
    pub fn shifted_value(&self, values: &[f64], node: usize, stencil: &ShiftStencil) -> Option<f64> {
        let idx = self.multi_index(node);
        let mut base = [0usize; 2];
        for (a, (&(k, w), axis)) in stencil.offsets.iter().zip(&self.axes).enumerate() {
            let j = idx[a] as i64 + k;
            let top = if w > 0.0 { j + 1 } else { j };
            if j < 0 || top >= axis.count as i64 {
                return None;
            }
            base[a] = j as usize;
        }
        let dim = self.dim();
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut weight = 1.0;
            let mut at = base;
            for a in 0..dim {
                let w = stencil.offsets[a].1;
                if corner >> a & 1 == 1 {
                    if w == 0.0 {
                        weight = 0.0;
                        break;
                    }
                    weight *= w;
                    at[a] += 1;
                } else {
                    weight *= 1.0 - w;
                }
            }
            if weight != 0.0 {
                acc += weight * values[self.node_at(at)];
            }
        }
        Some(acc)
    }

    /// Multilinear interpolation at an arbitrary point inside the box.
    pub fn interpolate(&self, values: &[f64], point: &[f64]) -> Option<f64> {
        let origin = self.axes.iter().map(|a| a.min).collect::<Vec<_>>();
        let shift: Vec<f64> = point.iter().zip(&origin).map(|(p, o)| p - o).collect();
        self.shifted_value(values, 0, &self.shift_stencil(&shift))
    }

    /// Node closest to `point`, clamped into the box.
    pub fn nearest_node(&self, point: &[f64]) -> usize {
        let mut idx = [0usize; 2];
        for (a, axis) in self.axes.iter().enumerate() {
            let pos = ((point[a] - axis.min) / axis.step).round();
            idx[a] = pos.clamp(0.0, (axis.count - 1) as f64) as usize;
        }
        self.node_at(idx)
    }

    /// Nodes inside the centered sub-box covering `fraction` of each axis.
    pub fn interior_mask(&self, fraction: f64) -> Vec<bool> {
        let bounds: Vec<(f64, f64)> = self
            .axes
            .iter()
            .map(|a| {
                let c = 0.5 * (a.min + a.max());
                let half = 0.5 * fraction * (a.max() - a.min);
                (c - half - 1e-12, c + half + 1e-12)
            })
            .collect();
        (0..self.len())
            .map(|node| {
                let idx = self.multi_index(node);
                self.axes.iter().enumerate().all(|(a, axis)| {
                    let x = axis.coord(idx[a]);
                    x >= bounds[a].0 && x <= bounds[a].1
                })
            })
            .collect()
    }
}

/// Spatial grid plus a uniform time grid on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub space: SpatialGrid,
    pub horizon: f64,
    pub steps: usize,
}

impl SpaceTimeGrid {
    pub fn new(space: SpatialGrid, horizon: f64, steps: usize) -> Result<Self, GridError> {
        if steps == 0 {
            return Err(GridError::NoSteps);
        }
        Ok(Self { space, horizon, steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, level: usize) -> f64 {
        if level == self.steps {
            self.horizon
        } else {
            self.horizon * level as f64 / self.steps as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

/// Values of a function on one time slice of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSlice {
    pub grid: SpatialGrid,
    pub time: f64,
    pub values: Vec<f64>,
}

impl GridSlice {
    pub fn new(grid: SpatialGrid, time: f64, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, time, values }
    }

    pub fn constant(grid: SpatialGrid, time: f64, value: f64) -> Self {
        let n = grid.len();
        Self::new(grid, time, vec![value; n])
    }

    /// Samples `f` at every node.
    pub fn from_fn<E>(grid: SpatialGrid, time: f64, mut f: impl FnMut(&[f64]) -> Result<f64, E>) -> Result<Self, E> {
        let mut x = vec![0.0; grid.dim()];
        let mut values = Vec::with_capacity(grid.len());
        for node in 0..grid.len() {
            grid.coords(node, &mut x);
            values.push(f(&x)?);
        }
        Ok(Self::new(grid, time, values))
    }
}

/// `max |a - b|` over entries, with NaN propagating as infinity.
pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m: f64, (x, y)| {
        let d = (x - y).abs();
        if d.is_nan() {
            f64::INFINITY
        } else {
            m.max(d)
        }
    })
}
