use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use impulse_game::io::{compare_fields, run, Command, IoError, RunConfig};

#[derive(Parser)]
#[command(name = "impulse-game", version, about = "Value functions of zero-sum impulse-control games")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Finite-difference solve, residual and field export.
    Solve(Common),
    /// Lattice game solve with DPP and decision-order diagnostics.
    Oracle(Common),
    /// Monte Carlo of the policy extracted from a PDE solve.
    Simulate(Common),
    /// Assumption, identity, regularity and terminal-bound suites.
    Check(Common),
    /// PDE against lattice at matched resolution, or two field files.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Compare two field CSV files instead of solving.
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        fields: Option<Vec<PathBuf>>,
    },
}

#[derive(clap::Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Registry problem name (P0..P3).
    #[arg(long)]
    problem: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Value probe point `t,x0[,x1]`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    probe: Option<Vec<f64>>,
}

impl Common {
    fn config(&self) -> Result<RunConfig, IoError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.clone(), source })?;
                RunConfig::from_toml_str(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(p) = &self.problem {
            cfg.problem = p.clone();
            cfg.spec = None;
        }
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.simulation.seed = seed;
        }
        if let Some(probe) = &self.probe {
            cfg.probe = Some(probe.clone());
        }
        cfg.resolve()
    }
}

fn execute(cmd: Command, common: &Common) -> ExitCode {
    let cfg = match common.config() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(cmd, &cfg) {
        Ok(report) => {
            match report.to_json() {
                Ok(json) => println!("{json}"),
                Err(e) => eprintln!("error: {e}"),
            }
            if report.suites_pass() {
                ExitCode::SUCCESS
            } else {
                for s in report.metrics.suites.iter().filter(|s| !s.passed) {
                    eprintln!("suite {} failed: {}", s.name, s.detail);
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn compare_files(common: &Common, a: &Path, b: &Path) -> ExitCode {
    let result = common.config().and_then(|cfg| {
        let spec = cfg.problem_spec()?;
        let fa = impulse_game::io::read_field(a, &spec)?;
        let fb = impulse_game::io::read_field(b, &spec)?;
        compare_fields(&fa, &fb, cfg.interior_fraction)
    });
    match result {
        Ok(gap) => {
            println!("sup {:?}\nmean {:?}\ninitial_sup {:?}\nnodes {}", gap.sup, gap.mean, gap.initial_sup, gap.nodes);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Cmd::Solve(c) => execute(Command::Solve, c),
        Cmd::Oracle(c) => execute(Command::Oracle, c),
        Cmd::Simulate(c) => execute(Command::Simulate, c),
        Cmd::Check(c) => execute(Command::Check, c),
        Cmd::Compare { common, fields: Some(f) } => compare_files(common, &f[0], &f[1]),
        Cmd::Compare { common, fields: None } => execute(Command::Compare, common),
    }
}
