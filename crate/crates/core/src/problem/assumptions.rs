//! Sampled falsification checks for the standing assumptions on a game.
//!
//! The checks quantify over continua in principle; here they run over a
//! seeded sample of times, states and all pairs/triples of the (finite)
//! impulse sets. Failures are reported with witnesses, never thrown.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ProblemError, ProblemSpec};

/// Maximum number of witnesses kept per assumption.
const MAX_WITNESSES: usize = 4;
/// Tolerance for deciding that a combined action belongs to a set.
const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionId {
    /// Forms must evaluate on the declared box.
    Domain,
    /// Cost floors: `c > 0`, `χ > 0`.
    A1,
    /// `c(t, y1+z+y2) <= c(t,y1) - χ(t,z) + c(t,y2) - h(t)`, with `h > 0`.
    A2,
    /// `χ(t, z1+z2) <= χ(t,z1) + χ(t,z2) - h(t)`.
    A3,
    /// Costs non-increasing in time.
    A4,
    /// Driver monotone in `y` (either direction, non-strict).
    DriverMonotone,
    /// Driver strictly increasing in `y` (literal reading). Diagnostic only.
    DriverStrictlyIncreasing,
    /// Driver strictly decreasing in `y`. Diagnostic only.
    DriverStrictlyDecreasing,
}

/// A sampled point where an inequality failed: `point` lists the sampled
/// arguments in the order documented by each check, and `lhs`/`rhs` are the
/// two sides of the violated inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub assumption: AssumptionId,
    pub point: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub domain_pass: bool,
    pub a1_pass: bool,
    pub a2_pass: bool,
    pub a3_pass: bool,
    pub a4_pass: bool,
    pub driver_monotone_pass: bool,
    pub driver_strictly_increasing: bool,
    pub driver_strictly_decreasing: bool,
    pub violations: Vec<Witness>,
    pub diagnostics: Vec<Witness>,
    pub lipschitz_drift: f64,
    pub lipschitz_sigma: f64,
    pub lipschitz_driver: f64,
    pub warnings: Vec<String>,
    pub sample_budget: usize,
    pub seed: u64,
}

impl AssumptionReport {
    /// All gating checks hold.
    pub fn passes(&self) -> bool {
        self.domain_pass
            && self.a1_pass
            && self.a2_pass
            && self.a3_pass
            && self.a4_pass
            && self.driver_monotone_pass
    }

    pub fn witnesses_for(&self, id: AssumptionId) -> impl Iterator<Item = &Witness> {
        self.violations.iter().chain(&self.diagnostics).filter(move |w| w.assumption == id)
    }
}

struct Collector {
    witnesses: Vec<Witness>,
}

impl Collector {
    fn push(&mut self, assumption: AssumptionId, point: Vec<f64>, lhs: f64, rhs: f64, note: &str) {
        let seen = self.witnesses.iter().filter(|w| w.assumption == assumption).count();
        if seen < MAX_WITNESSES {
            self.witnesses.push(Witness { assumption, point, lhs, rhs, note: note.to_string() });
        }
    }

    fn any(&self, id: AssumptionId) -> bool {
        self.witnesses.iter().any(|w| w.assumption == id)
    }
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn sum_actions(parts: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![0.0; parts[0].len()];
    for p in parts {
        for (o, v) in out.iter_mut().zip(p.iter()) {
            *o += v;
        }
    }
    out
}

fn domain_note(e: &ProblemError) -> String {
    format!("evaluation failed: {e}")
}

/// Runs every check on `sample_budget` seeded sample times/points.
pub fn validate_assumptions(spec: &ProblemSpec, sample_budget: usize, rng_seed: u64) -> AssumptionReport {
    let budget = sample_budget.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let horizon = spec.horizon;
    let (n, d) = (spec.dim, spec.noise_dim);
    let mut out = Collector { witnesses: Vec::new() };
    let mut diag = Collector { witnesses: Vec::new() };

    let mut times = vec![0.0, horizon];
    times.extend((0..budget).map(|_| rng.random_range(0.0..=horizon)));
    let sample_state = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        spec.domain.iter().map(|b| rng.random_range(b[0]..=b[1])).collect()
    };

    let u = &spec.impulses_u.actions;
    let v = &spec.impulses_v.actions;

    // Evaluations that fail are recorded as domain witnesses and skipped.
    let cost = |t: f64, a: &[f64], out: &mut Collector| match spec.cost_at(t, a) {
        Ok(c) => Some(c),
        Err(e) => {
            out.push(AssumptionId::Domain, concat(&[&[t], a]), 0.0, 0.0, &domain_note(&e));
            None
        }
    };
    let gain = |t: f64, a: &[f64], out: &mut Collector| match spec.gain_at(t, a) {
        Ok(c) => Some(c),
        Err(e) => {
            out.push(AssumptionId::Domain, concat(&[&[t], a]), 0.0, 0.0, &domain_note(&e));
            None
        }
    };

    for &t in &times {
        // (a1) point = [t, action..]
        for y in u {
            if let Some(c) = cost(t, y, &mut out) {
                if !(c > 0.0) {
                    out.push(AssumptionId::A1, concat(&[&[t], y]), c, 0.0, "c must be > 0");
                }
            }
        }
        for z in v {
            if let Some(x) = gain(t, z, &mut out) {
                if !(x > 0.0) {
                    out.push(AssumptionId::A1, concat(&[&[t], z]), x, 0.0, "chi must be > 0");
                }
            }
        }

        let h = match spec.h_at(t) {
            Ok(h) => h,
            Err(e) => {
                out.push(AssumptionId::Domain, vec![t], 0.0, 0.0, &domain_note(&e));
                continue;
            }
        };
        if !(h > 0.0) {
            out.push(AssumptionId::A2, vec![t], h, 0.0, "h must be > 0");
            out.push(AssumptionId::A3, vec![t], h, 0.0, "h must be > 0");
        }

        // (a2) point = [t, y1.., z.., y2..]
        for y1 in u {
            for z in v {
                for y2 in u {
                    let combined = sum_actions(&[y1, z, y2]);
                    if spec.impulses_u.position(&combined, MEMBERSHIP_TOL).is_none() {
                        continue;
                    }
                    let (Some(lhs), Some(c1), Some(chi), Some(c2)) = (
                        cost(t, &combined, &mut out),
                        cost(t, y1, &mut out),
                        gain(t, z, &mut out),
                        cost(t, y2, &mut out),
                    ) else {
                        continue;
                    };
                    let rhs = c1 - chi + c2 - h;
                    if lhs > rhs {
                        out.push(AssumptionId::A2, concat(&[&[t], y1, z, y2]), lhs, rhs, "c(y1+z+y2) > c(y1) - chi(z) + c(y2) - h");
                    }
                }
            }
        }

        // (a3) point = [t, z1.., z2..]
        for z1 in v {
            for z2 in v {
                let combined = sum_actions(&[z1, z2]);
                if spec.impulses_v.position(&combined, MEMBERSHIP_TOL).is_none() {
                    continue;
                }
                let (Some(lhs), Some(g1), Some(g2)) =
                    (gain(t, &combined, &mut out), gain(t, z1, &mut out), gain(t, z2, &mut out))
                else {
                    continue;
                };
                let rhs = g1 + g2 - h;
                if lhs > rhs {
                    out.push(AssumptionId::A3, concat(&[&[t], z1, z2]), lhs, rhs, "chi(z1+z2) > chi(z1) + chi(z2) - h");
                }
            }
        }
    }

    // (a4) point = [t, t_later, action..]; requires cost(t) >= cost(t_later).
    let mut pairs = vec![(0.0, horizon)];
    for _ in 0..budget {
        let a = rng.random_range(0.0..=horizon);
        let b = rng.random_range(0.0..=horizon);
        pairs.push((a.min(b), a.max(b)));
    }
    for &(t, later) in &pairs {
        for y in u {
            if let (Some(early), Some(late)) = (cost(t, y, &mut out), cost(later, y, &mut out)) {
                if early < late {
                    out.push(AssumptionId::A4, concat(&[&[t, later], y]), early, late, "c increases in time");
                }
            }
        }
        for z in v {
            if let (Some(early), Some(late)) = (gain(t, z, &mut out), gain(later, z, &mut out)) {
                if early < late {
                    out.push(AssumptionId::A4, concat(&[&[t, later], z]), early, late, "chi increases in time");
                }
            }
        }
    }

    // Driver monotonicity in y and sampled Lipschitz ratios.
    let mut lip_b: f64 = 0.0;
    let mut lip_s: f64 = 0.0;
    let mut lip_f: f64 = 0.0;
    let (mut non_decreasing, mut non_increasing) = (true, true);
    let (mut strict_inc, mut strict_dec) = (true, true);
    let mut inc_witness = None;
    let mut dec_witness = None;
    let mut b1 = vec![0.0; n];
    let mut b2 = vec![0.0; n];
    let mut s1 = vec![0.0; n * d];
    let mut s2 = vec![0.0; n * d];
    for _ in 0..budget {
        let t = rng.random_range(0.0..=horizon);
        let x1 = sample_state(&mut rng);
        let x2: Vec<f64> = x1
            .iter()
            .zip(&spec.domain)
            .map(|(&xi, b)| {
                let step = 0.01 * (b[1] - b[0]);
                (xi + rng.random_range(-step..=step)).clamp(b[0], b[1])
            })
            .collect();
        let z1: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let z2: Vec<f64> = z1.iter().map(|z| z + rng.random_range(-0.1..=0.1)).collect();
        let ya = rng.random_range(-10.0..=10.0);
        let yb = ya + rng.random_range(1e-3..=1.0);
        let dx = x1.iter().zip(&x2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();

        let eval = (|| -> Result<(), ProblemError> {
            spec.drift_at(t, &x1, &mut b1)?;
            spec.drift_at(t, &x2, &mut b2)?;
            spec.sigma_at(t, &x1, &mut s1)?;
            spec.sigma_at(t, &x2, &mut s2)?;
            if dx > 0.0 {
                lip_b = lip_b.max(norm_diff(&b1, &b2) / dx);
                lip_s = lip_s.max(norm_diff(&s1, &s2) / dx);
            }
            let fa = spec.driver_at(t, &x1, ya, &z1)?;
            let fb = spec.driver_at(t, &x1, yb, &z1)?;
            let fc = spec.driver_at(t, &x2, yb, &z2)?;
            let dist = (dx * dx + (yb - ya).powi(2) + norm_diff(&z1, &z2).powi(2)).sqrt();
            lip_f = lip_f.max((fa - fc).abs() / dist);

            let point = concat(&[&[t], &x1, &[ya, yb], &z1]);
            if fa > fb {
                non_decreasing = false;
                inc_witness.get_or_insert((point.clone(), fa, fb));
            }
            if fa < fb {
                non_increasing = false;
                dec_witness.get_or_insert((point.clone(), fa, fb));
            }
            if !(fa < fb) && strict_inc {
                strict_inc = false;
                diag.push(AssumptionId::DriverStrictlyIncreasing, point.clone(), fa, fb, "f(y1) < f(y2) fails for y1 < y2");
            }
            if !(fa > fb) && strict_dec {
                strict_dec = false;
                diag.push(AssumptionId::DriverStrictlyDecreasing, point, fa, fb, "f(y1) > f(y2) fails for y1 < y2");
            }
            Ok(())
        })();
        if let Err(e) = eval {
            out.push(AssumptionId::Domain, concat(&[&[t], &x1]), 0.0, 0.0, &domain_note(&e));
        }
    }
    if !(non_decreasing || non_increasing) {
        for (point, fa, fb) in [inc_witness, dec_witness].into_iter().flatten() {
            out.push(AssumptionId::DriverMonotone, point, fa, fb, "f is not monotone in y");
        }
    }

    // Terminal payoff must also be total on the box.
    for _ in 0..budget {
        let x = sample_state(&mut rng);
        if let Err(e) = spec.terminal_at(&x) {
            out.push(AssumptionId::Domain, x, 0.0, 0.0, &domain_note(&e));
        }
    }

    let warnings = spec
        .impulses_u
        .actions
        .iter()
        .filter(|a| spec.impulses_v.position(a, MEMBERSHIP_TOL).is_none())
        .map(|a| format!("U is not contained in V: action {a:?} missing from V"))
        .collect();

    AssumptionReport {
        domain_pass: !out.any(AssumptionId::Domain),
        a1_pass: !out.any(AssumptionId::A1),
        a2_pass: !out.any(AssumptionId::A2),
        a3_pass: !out.any(AssumptionId::A3),
        a4_pass: !out.any(AssumptionId::A4),
        driver_monotone_pass: !out.any(AssumptionId::DriverMonotone),
        driver_strictly_increasing: strict_inc,
        driver_strictly_decreasing: strict_dec,
        violations: out.witnesses,
        diagnostics: diag.witnesses,
        lipschitz_drift: lip_b,
        lipschitz_sigma: lip_s,
        lipschitz_driver: lip_f,
        warnings,
        sample_budget: budget,
        seed: rng_seed,
    }
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
