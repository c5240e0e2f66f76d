//! Closed registry of named coefficient forms.
//!
//! Every scalar coefficient of a game (a drift component, a volatility
//! entry, the driver, the terminal payoff, the impulse costs and the floor
//! `h`) is one [`CoefficientForm`]: a [`FormKind`] plus a flat parameter
//! list. Vector- and matrix-valued coefficients are lists of forms, one per
//! component.
//!
//! Parameter layouts, with `m` the length of the state argument:
//!
//! | kind            | params                                   | value |
//! |-----------------|------------------------------------------|-------|
//! | `constant`      | `[k]`                                    | `k` |
//! | `linear`        | `[a0, a_t, a_1 .. a_m]`                  | `a0 + a_t t + Σ a_i x_i` |
//! | `affine_in_y`   | `[a, kappa]` or `[a, kappa, g_1 .. g_d]` | `a + kappa y + Σ g_j z_j` |
//! | `cosine`        | `[amplitude, frequency]`                 | `amplitude Π cos(frequency x_i)` |
//! | `gaussian_bump` | `[amplitude, width, c_1 .. c_m]`         | `amplitude exp(-|x - c|² / (2 width²))` |
//! | `tabulated`     | `[m, n_1 .. n_m, knots.., values..]`     | multilinear interpolation in `x` |
//!
//! For `tabulated`, the knots of each axis are listed axis after axis and
//! must be strictly increasing; the `Π n_i` values follow in row-major order
//! (last axis fastest). Queries outside the knot box are domain errors.
//!
//! Costs `c(t, y)` and `χ(t, z)` are evaluated with the action in the state
//! slot; `h(t)` is evaluated at the origin.

use serde::{Deserialize, Serialize};

use super::ProblemError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormKind {
    Constant,
    Linear,
    AffineInY,
    Cosine,
    GaussianBump,
    Tabulated,
}

impl FormKind {
    pub fn name(self) -> &'static str {
        match self {
            FormKind::Constant => "constant",
            FormKind::Linear => "linear",
            FormKind::AffineInY => "affine_in_y",
            FormKind::Cosine => "cosine",
            FormKind::GaussianBump => "gaussian_bump",
            FormKind::Tabulated => "tabulated",
        }
    }
}

/// A scalar coefficient `(t, x, y, z) -> R` drawn from the registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientForm {
    pub kind: FormKind,
    pub params: Vec<f64>,
}

/// Decoded layout of a tabulated form.
struct Table<'a> {
    axes: Vec<&'a [f64]>,
    values: &'a [f64],
}

impl CoefficientForm {
    pub fn constant(k: f64) -> Self {
        Self { kind: FormKind::Constant, params: vec![k] }
    }

    pub fn linear(offset: f64, time_slope: f64, state_slopes: &[f64]) -> Self {
        let mut params = vec![offset, time_slope];
        params.extend_from_slice(state_slopes);
        Self { kind: FormKind::Linear, params }
    }

    pub fn affine_in_y(a: f64, kappa: f64) -> Self {
        Self { kind: FormKind::AffineInY, params: vec![a, kappa] }
    }

    pub fn cosine(amplitude: f64, frequency: f64) -> Self {
        Self { kind: FormKind::Cosine, params: vec![amplitude, frequency] }
    }

    pub fn gaussian_bump(amplitude: f64, width: f64, center: &[f64]) -> Self {
        let mut params = vec![amplitude, width];
        params.extend_from_slice(center);
        Self { kind: FormKind::GaussianBump, params }
    }

    /// Tabulated form over `knots.len()` state axes. `values` is row-major.
    pub fn tabulated(knots: &[Vec<f64>], values: &[f64]) -> Self {
        let mut params = vec![knots.len() as f64];
        params.extend(knots.iter().map(|k| k.len() as f64));
        for k in knots {
            params.extend_from_slice(k);
        }
        params.extend_from_slice(values);
        Self { kind: FormKind::Tabulated, params }
    }

    /// Checks the parameter count (and the tabulated layout) against the
    /// length of the state argument and the noise dimension.
    pub fn check_arity(&self, state_dim: usize, noise_dim: usize) -> Result<(), ProblemError> {
        let expected = match self.kind {
            FormKind::Constant => vec![1],
            FormKind::Linear | FormKind::GaussianBump => vec![2 + state_dim],
            FormKind::AffineInY => vec![2, 2 + noise_dim],
            FormKind::Cosine => vec![2],
            FormKind::Tabulated => {
                let table = self.table()?;
                if table.axes.len() != state_dim {
                    return Err(self.bad_params(format!(
                        "tabulated form spans {} axes, state has {}",
                        table.axes.len(),
                        state_dim
                    )));
                }
                return Ok(());
            }
        };
        if !expected.contains(&self.params.len()) {
            return Err(self.bad_params(format!(
                "expected {:?} parameters, found {}",
                expected,
                self.params.len()
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(self.bad_params("non-finite parameter".into()));
        }
        if self.kind == FormKind::GaussianBump && self.params[1] <= 0.0 {
            return Err(self.bad_params("bump width must be positive".into()));
        }
        Ok(())
    }

    fn bad_params(&self, reason: String) -> ProblemError {
        ProblemError::BadParams { kind: self.kind.name(), reason }
    }

    fn table(&self) -> Result<Table<'_>, ProblemError> {
        let p = &self.params;
        let as_count = |v: f64| -> Option<usize> {
            (v.is_finite() && v >= 1.0 && v.fract() == 0.0).then_some(v as usize)
        };
        let m = p
            .first()
            .and_then(|&v| as_count(v))
            .ok_or_else(|| self.bad_params("missing axis count".into()))?;
        if p.len() < 1 + m {
            return Err(self.bad_params("truncated knot counts".into()));
        }
        let mut lens = Vec::with_capacity(m);
        for &v in &p[1..=m] {
            let n = as_count(v).filter(|&n| n >= 2);
            lens.push(n.ok_or_else(|| self.bad_params("each axis needs at least two knots".into()))?);
        }
        let n_knots: usize = lens.iter().sum();
        let n_values: usize = lens.iter().product();
        if p.len() != 1 + m + n_knots + n_values {
            return Err(self.bad_params(format!(
                "expected {} parameters for the declared table, found {}",
                1 + m + n_knots + n_values,
                p.len()
            )));
        }
        let mut axes = Vec::with_capacity(m);
        let mut at = 1 + m;
        for &n in &lens {
            let knots = &p[at..at + n];
            if knots.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(self.bad_params("knots must be strictly increasing".into()));
            }
            axes.push(knots);
            at += n;
        }
        Ok(Table { axes, values: &p[at..] })
    }

    /// True when the form cannot vary with `t`.
    pub fn is_time_independent(&self) -> bool {
        match self.kind {
            FormKind::Linear => self.params.get(1).copied().unwrap_or(0.0) == 0.0,
            _ => true,
        }
    }

    /// Slope in `y` and whether the form ignores `z`, for forms that are
    /// affine in `y`. `None` when the form depends on `z`.
    pub fn affine_y_slope(&self) -> Option<f64> {
        match self.kind {
            FormKind::AffineInY => {
                if self.params[2..].iter().any(|&g| g != 0.0) {
                    None
                } else {
                    Some(self.params[1])
                }
            }
            _ => Some(0.0),
        }
    }

    /// Lipschitz constant in `(y, z)` (exact for the registry kinds).
    pub fn yz_lipschitz(&self) -> f64 {
        match self.kind {
            FormKind::AffineInY => {
                let g2: f64 = self.params[2..].iter().map(|g| g * g).sum();
                (self.params[1] * self.params[1] + g2).sqrt()
            }
            _ => 0.0,
        }
    }

    pub fn eval(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> Result<f64, ProblemError> {
        let p = &self.params;
        let v = match self.kind {
            FormKind::Constant => p[0],
            FormKind::Linear => {
                p[0] + p[1] * t + p[2..].iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>()
            }
            FormKind::AffineInY => {
                p[0] + p[1] * y + p[2..].iter().zip(z).map(|(g, zj)| g * zj).sum::<f64>()
            }
            FormKind::Cosine => p[0] * x.iter().map(|xi| (p[1] * xi).cos()).product::<f64>(),
            FormKind::GaussianBump => {
                let r2: f64 = p[2..].iter().zip(x).map(|(c, xi)| (xi - c) * (xi - c)).sum();
                p[0] * (-r2 / (2.0 * p[1] * p[1])).exp()
            }
            FormKind::Tabulated => self.eval_table(x)?,
        };
        Ok(v)
    }

    fn eval_table(&self, x: &[f64]) -> Result<f64, ProblemError> {
        let table = self.table()?;
        let m = table.axes.len();
        if x.len() < m {
            return Err(self.bad_params("state shorter than table".into()));
        }
        // Per axis: lower knot index and fractional weight of the upper knot.
        let mut cell = Vec::with_capacity(m);
        for (axis, (&xi, knots)) in x.iter().zip(&table.axes).enumerate() {
            let (lo, hi) = (knots[0], knots[knots.len() - 1]);
            if !(xi >= lo && xi <= hi) {
                return Err(ProblemError::Domain { axis, value: xi, lo, hi });
            }
            let j = knots.partition_point(|&k| k <= xi).clamp(1, knots.len() - 1) - 1;
            let w = (xi - knots[j]) / (knots[j + 1] - knots[j]);
            cell.push((j, w));
        }
        let mut strides = vec![1usize; m];
        for a in (0..m.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * table.axes[a + 1].len();
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << m) {
            let mut weight = 1.0;
            let mut offset = 0;
            for (a, &(j, w)) in cell.iter().enumerate() {
                let upper = corner >> a & 1 == 1;
                weight *= if upper { w } else { 1.0 - w };
                offset += (j + usize::from(upper)) * strides[a];
            }
            if weight != 0.0 {
                acc += weight * table.values[offset];
            }
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_kinds() {
        assert_eq!(CoefficientForm::constant(3.0).eval(0.4, &[1.0], 2.0, &[0.0]).unwrap(), 3.0);
        assert_eq!(CoefficientForm::cosine(1.0, 1.0).eval(0.0, &[0.0], 0.0, &[]).unwrap(), 1.0);
        let f = CoefficientForm::affine_in_y(0.2, -0.1);
        assert!((f.eval(0.0, &[0.0], 10.0, &[0.0]).unwrap() - (-0.8)).abs() < 1e-15);
        let lin = CoefficientForm::linear(1.0, 1.0, &[0.0]);
        assert_eq!(lin.eval(0.5, &[7.0], 0.0, &[]).unwrap(), 1.5);
        assert!(!lin.is_time_independent());
    }

    #[test]
    fn tabulated_is_multilinear_and_bounded() {
        let f = CoefficientForm::tabulated(&[vec![0.0, 1.0, 3.0]], &[0.0, 2.0, 0.0]);
        f.check_arity(1, 1).unwrap();
        assert_eq!(f.eval(0.0, &[0.5], 0.0, &[]).unwrap(), 1.0);
        assert_eq!(f.eval(0.0, &[2.0], 0.0, &[]).unwrap(), 1.0);
        assert_eq!(f.eval(0.0, &[3.0], 0.0, &[]).unwrap(), 0.0);
        assert!(matches!(f.eval(0.0, &[3.5], 0.0, &[]), Err(ProblemError::Domain { .. })));

        let g = CoefficientForm::tabulated(
            &[vec![0.0, 1.0], vec![0.0, 1.0]],
            &[0.0, 1.0, 2.0, 3.0],
        );
        g.check_arity(2, 2).unwrap();
        // bilinear: v = 2 x0 + x1
        assert!((g.eval(0.0, &[0.25, 0.5], 0.0, &[]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn arity_is_checked() {
        let bad = CoefficientForm { kind: FormKind::Cosine, params: vec![1.0] };
        assert!(bad.check_arity(1, 1).is_err());
        let bump = CoefficientForm::gaussian_bump(1.0, 0.5, &[0.0, 0.0]);
        assert!(bump.check_arity(2, 2).is_ok());
        assert!(bump.check_arity(1, 1).is_err());
        let unsorted = CoefficientForm::tabulated(&[vec![1.0, 0.0]], &[0.0, 0.0]);
        assert!(unsorted.check_arity(1, 1).is_err());
    }
}
