//! Orchestration of the five commands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use thiserror::Error;

use crate::field::ValueField;
use crate::grid::{SpaceTimeGrid, SpatialGrid};
use crate::hjbi::{self, diagnostics, pde_grid, qvi_residual, ResidualField, SolverError};
use crate::lattice::{build_lattice, dpp_residual, isaacs_gap, solve_game, GameOptions, LatticeError, LatticeModel};
use crate::problem::{validate_assumptions, AssumptionReport, ProblemSpec};
use crate::simulate::{evaluate_cost_mc, extract_policy, simulate_paths, write_paths_csv, SimulationError, SimulationOptions};

use super::compare::compare_fields;
use super::config::RunConfig;
use super::field_csv::write_field;
use super::report::{write_report, Command, Metrics, Refinement, RunReport, Suite};
use super::IoError;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}: validation failed: {1}")]
    Validation(Command, String),
    #[error("{0}: {1}")]
    Solver(Command, #[source] SolverError),
    #[error("{0}: {1}")]
    Lattice(Command, #[source] LatticeError),
    #[error("{0}: {1}")]
    Simulation(Command, #[source] SimulationError),
    #[error("{0}: {1}")]
    Io(Command, #[source] IoError),
}

impl RunError {
    /// 2 for numerical non-convergence, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Solver(_, SolverError::NonConvergence { .. })
            | RunError::Lattice(_, LatticeError::Solver(SolverError::NonConvergence { .. })) => 2,
            _ => 1,
        }
    }
}

struct Ctx<'a> {
    cmd: Command,
    cfg: &'a RunConfig,
    spec: ProblemSpec,
    artifacts: Vec<String>,
}

impl Ctx<'_> {
    fn io(&self, e: IoError) -> RunError {
        RunError::Io(self.cmd, e)
    }

    fn solver(&self, e: impl Into<SolverError>) -> RunError {
        RunError::Solver(self.cmd, e.into())
    }

    fn path(&mut self, name: &str) -> std::path::PathBuf {
        let p = self.cfg.output.join(name);
        self.artifacts.push(p.display().to_string());
        p
    }

    fn space(&self, dx: f64) -> Result<SpatialGrid, RunError> {
        SpatialGrid::from_box(&self.spec.domain, dx).map_err(|e| self.solver(e))
    }

    fn pde(&self, dx: f64, steps: Option<usize>) -> Result<ValueField, RunError> {
        let space = self.space(dx)?;
        let grid = match steps {
            Some(n) => SpaceTimeGrid::new(space, self.spec.horizon, n).map_err(|e| self.solver(e))?,
            None => pde_grid(&self.spec, space, self.cfg.grid.cfl_safety).map_err(|e| self.solver(e))?,
        };
        hjbi::solve_pde(&self.spec, &grid, &self.cfg.solver).map_err(|e| self.solver(e))
    }

    fn configured_pde(&self) -> Result<ValueField, RunError> {
        self.pde(self.cfg.grid.dx, self.cfg.grid.steps)
    }

    fn game_options(&self) -> GameOptions {
        GameOptions {
            order: self.cfg.lattice.decision_order,
            force_continuation_at_initial: self.cfg.lattice.force_continuation_at_initial,
            fixed_point: self.cfg.solver,
        }
    }

    fn lattice(&self) -> Result<(LatticeModel, ValueField), RunError> {
        let err = |e| RunError::Lattice(self.cmd, e);
        let steps = self.cfg.lattice.steps.ok_or_else(|| self.io(IoError::Config("config is not resolved".into())))?;
        let model = build_lattice(&self.spec, steps, &self.spec.domain, self.cfg.grid.dx).map_err(err)?;
        let field = solve_game(&model, &self.spec, &self.game_options()).map_err(err)?;
        Ok((model, field))
    }

    fn probe(&self, field: &ValueField) -> Option<f64> {
        let p = self.cfg.probe.as_ref()?;
        field.value_at(p[0], &p[1..])
    }

    fn write_field(&mut self, field: &ValueField, name: &str) -> Result<(), RunError> {
        let path = self.path(name);
        write_field(field, &self.spec, &path).map_err(|e| self.io(e))
    }
}

/// Residual sup over levels before the last tenth of the horizon.
fn early_sup(res: &ResidualField, field: &ValueField) -> f64 {
    let cut = 0.9 * field.grid.horizon;
    res.level_sup.iter().enumerate().filter(|&(k, _)| field.grid.time(k) < cut).map(|(_, &r)| r).fold(0.0, f64::max)
}

fn write_residual(field: &ValueField, res: &ResidualField, path: &Path) -> std::io::Result<()> {
    let space = &field.grid.space;
    let mut out = BufWriter::new(File::create(path)?);
    let axes: Vec<String> = (0..space.dim()).map(|i| format!("x{i}")).collect();
    writeln!(out, "t,{},residual", axes.join(","))?;
    let mut x = vec![0.0; space.dim()];
    for (k, level) in res.residual.iter().enumerate() {
        let t = field.grid.time(k);
        for (node, r) in level.iter().enumerate() {
            space.coords(node, &mut x);
            let coords: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{t:?},{},{r:?}", coords.join(","))?;
        }
    }
    out.flush()
}

fn assumption_summary(report: &AssumptionReport) -> String {
    let names: Vec<String> = report.violations.iter().map(|w| format!("{:?} at {:?}: {}", w.assumption, w.point, w.note)).collect();
    names.join("; ")
}

fn suite(name: &str, passed: bool, detail: String) -> Suite {
    Suite { name: name.into(), passed, detail }
}

fn not_larger(fine: f64, coarse: f64, ratio: f64) -> bool {
    fine <= ratio * coarse + 1e-12
}

/// Runs `cmd` under a resolved config, writes its artifacts and report into
/// `cfg.output`, and returns the report.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let spec = cfg.problem_spec().map_err(|e| RunError::Io(cmd, e))?;
    let mut ctx = Ctx { cmd, cfg, spec, artifacts: Vec::new() };
    let assumptions = validate_assumptions(&ctx.spec, cfg.check.assumption_samples, cfg.check.assumption_seed);
    if cmd != Command::Check && !assumptions.passes() {
        return Err(RunError::Validation(cmd, assumption_summary(&assumptions)));
    }
    std::fs::create_dir_all(&cfg.output)
        .map_err(|source| ctx.io(IoError::Io { path: cfg.output.clone(), source }))?;
    let mut m = Metrics { assumptions: Some(assumptions), ..Metrics::default() };

    match cmd {
        Command::Solve => {
            let field = ctx.configured_pde()?;
            let res = qvi_residual(&ctx.spec, &field).map_err(|e| ctx.solver(e))?;
            m.pde_steps = Some(field.grid.steps);
            m.value_at_probe = ctx.probe(&field);
            m.sup_residual = Some(res.sup_norm);
            m.sup_residual_early = Some(early_sup(&res, &field));
            m.residual_by_region = Some(res.region_sup);
            m.region_counts = Some(field.region_counts());
            ctx.write_field(&field, "field.csv")?;
            let path = ctx.path("residual.csv");
            write_residual(&field, &res, &path).map_err(|source| ctx.io(IoError::Io { path, source }))?;
        }
        Command::Oracle => {
            let (model, field) = ctx.lattice()?;
            let split = cfg.lattice.dpp_split.unwrap_or(model.grid.steps / 2);
            let err = |e| RunError::Lattice(cmd, e);
            let opts = ctx.game_options();
            m.lattice_steps = Some(model.grid.steps);
            m.value_at_probe = ctx.probe(&field);
            m.region_counts = Some(field.region_counts());
            m.dpp_residual = Some(dpp_residual(&model, &ctx.spec, &field, split, &opts).map_err(err)?);
            m.isaacs_gap = Some(isaacs_gap(&model, &ctx.spec, &opts, cfg.interior_fraction).map_err(err)?);
            ctx.write_field(&field, "oracle_field.csv")?;
        }
        Command::Simulate => {
            let field = ctx.configured_pde()?;
            let sim_err = |e| RunError::Simulation(cmd, e);
            let policy = extract_policy(&field, &ctx.spec).map_err(sim_err)?;
            let sim = &cfg.simulation;
            let x0 = sim.x0.clone().unwrap_or_else(|| vec![0.0; ctx.spec.dim]);
            let opts = SimulationOptions { max_impulses: sim.max_impulses, record_paths: false };
            let ensemble = simulate_paths(&ctx.spec, &policy, &x0, sim.t0, sim.n_paths, sim.seed, &opts).map_err(sim_err)?;
            let (estimate, stderr) = evaluate_cost_mc(&ensemble, &ctx.spec).map_err(sim_err)?;
            m.pde_steps = Some(field.grid.steps);
            m.value_at_probe = ctx.probe(&field);
            m.mc_estimate = Some(estimate);
            m.mc_stderr = Some(stderr);
            m.mc_reference = field.value_at(sim.t0, &x0);
            m.mc_capped_paths = Some(ensemble.capped_paths());
            if sim.export_paths > 0 {
                let opts = SimulationOptions { record_paths: true, ..opts };
                let n = sim.export_paths.min(sim.n_paths);
                let head = simulate_paths(&ctx.spec, &policy, &x0, sim.t0, n, sim.seed, &opts).map_err(sim_err)?;
                let path = ctx.path("paths.csv");
                let file = File::create(&path).map_err(|source| ctx.io(IoError::Io { path: path.clone(), source }))?;
                write_paths_csv(&head, BufWriter::new(file)).map_err(sim_err)?;
            }
        }
        Command::Check => {
            let assumptions = m.assumptions.as_ref().expect("set above");
            m.suites.push(suite("assumptions", assumptions.passes(), assumption_summary(assumptions)));
            let dx = [cfg.grid.dx, cfg.grid.dx / cfg.check.refinement as f64];
            let fields = [ctx.configured_pde()?, ctx.pde(dx[1], None)?];
            let mut r = Refinement {
                dx,
                sup_residual: [0.0; 2],
                sup_residual_early: [0.0; 2],
                lipschitz_x: [0.0; 2],
                holder_t: [0.0; 2],
                terminal_bound: [0.0; 2],
            };
            let mut identity_ok = true;
            let mut identity_detail = Vec::new();
            for (i, field) in fields.iter().enumerate() {
                let res = qvi_residual(&ctx.spec, field).map_err(|e| ctx.solver(e))?;
                r.sup_residual[i] = res.sup_norm;
                r.sup_residual_early[i] = early_sup(&res, field);
                r.lipschitz_x[i] = diagnostics::lipschitz_in_x(field, cfg.interior_fraction);
                r.holder_t[i] = diagnostics::holder_in_t(field, cfg.interior_fraction);
                r.terminal_bound[i] =
                    diagnostics::terminal_bound_constant(field, cfg.interior_fraction, cfg.check.terminal_window);
                let id = diagnostics::projection_identity(&ctx.spec, field).map_err(|e| ctx.solver(e))?;
                identity_ok &= id.exact();
                identity_detail.push(format!("dx {}: {} value and {} label mismatches", dx[i], id.value_mismatches, id.label_mismatches));
            }
            let coarse = &fields[0];
            let bound = diagnostics::value_bound(&ctx.spec, coarse).map_err(|e| ctx.solver(e))?;
            let sup = diagnostics::sup_abs(coarse);
            m.suites.push(suite("obstacle_sandwich", identity_ok, identity_detail.join("; ")));
            m.suites.push(suite(
                "residual_refinement",
                r.sup_residual[1] <= r.sup_residual[0] + 1e-12,
                format!("sup residual {:.3e} -> {:.3e} (before 0.9T: {:.3e} -> {:.3e})", r.sup_residual[0], r.sup_residual[1], r.sup_residual_early[0], r.sup_residual_early[1]),
            ));
            let ratio = cfg.check.regularity_ratio;
            m.suites.push(suite(
                "regularity",
                not_larger(r.lipschitz_x[1], r.lipschitz_x[0], ratio) && not_larger(r.holder_t[1], r.holder_t[0], ratio),
                format!("lipschitz {} -> {}, holder {} -> {}", r.lipschitz_x[0], r.lipschitz_x[1], r.holder_t[0], r.holder_t[1]),
            ));
            m.suites.push(suite(
                "terminal_bound",
                not_larger(r.terminal_bound[1], r.terminal_bound[0], cfg.check.terminal_ratio),
                format!("C {} -> {}", r.terminal_bound[0], r.terminal_bound[1]),
            ));
            m.suites.push(suite("value_bound", sup <= bound + 1e-12, format!("sup |V| {sup} <= {bound}")));
            m.pde_steps = Some(coarse.grid.steps);
            m.value_at_probe = ctx.probe(coarse);
            m.sup_residual = Some(r.sup_residual[0]);
            m.sup_residual_early = Some(r.sup_residual_early[0]);
            m.value_bound = Some(bound);
            m.refinement = Some(r);
        }
        Command::Compare => {
            let pde = ctx.configured_pde()?;
            let (model, game) = ctx.lattice()?;
            m.pde_steps = Some(pde.grid.steps);
            m.lattice_steps = Some(model.grid.steps);
            m.value_at_probe = ctx.probe(&pde);
            m.oracle_gap = Some(compare_fields(&pde, &game, cfg.interior_fraction).map_err(|e| ctx.io(e))?);
            ctx.write_field(&pde, "field.csv")?;
            ctx.write_field(&game, "oracle_field.csv")?;
        }
    }

    let report_path = ctx.path(&format!("report_{cmd}.json"));
    let report = RunReport {
        command: cmd,
        config: cfg.clone(),
        metrics: m,
        wall_time: start.elapsed().as_secs_f64(),
        artifacts: ctx.artifacts,
    };
    write_report(&report, &report_path).map_err(|e| RunError::Io(cmd, e))?;
    Ok(report)
}
