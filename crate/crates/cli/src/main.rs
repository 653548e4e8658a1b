//! Experiment runner for the entropy laboratory.
//!
//! `run <config>` executes one TOML scenario and writes byte-stable CSV
//! and JSON artifacts plus a machine-readable verdict; `accept <dir>`
//! folds a directory of verdicts into a one-line-per-check summary.
//! `spectrum`, `flow`, and `sweep` run built-in scenarios without a
//! config file.
//!
//! Exit codes: 0 all checks passed, 1 a check failed, 2 configuration
//! error, 3 solver error.

mod accept;
mod artifact;
mod exec;
mod scenario;

use clap::{Args, Parser, Subcommand};
use scenario::{Geometry, GridSection, Kind, Params, Scenario, Tolerances};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "entropy-lab", version, about = "Entropy, stability, and flow experiments on desk-scale geometries")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunFlags {
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts (default: ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reject aliased conformal factors instead of truncating them.
    #[arg(long)]
    strict_aliasing: bool,
    /// Comma-separated tolerance overrides, e.g. rel_fd=1e-5,dist=1e-7.
    #[arg(long)]
    tol_overrides: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a scenario config and write its artifacts.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Aggregate verdicts in a directory into a pass/fail summary.
    Accept {
        dir: PathBuf,
        /// Second run directory to byte-compare for the determinism check.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Operator table, kernel, and response identities (built-in scenario).
    Spectrum {
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Single normalized-flow run with a monotonicity audit.
    Flow {
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Basin-of-attraction sweep over modes and amplitudes.
    Sweep {
        #[command(flatten)]
        flags: RunFlags,
    },
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    // Validate the thread cap up front so a bad env var is a config error
    // for every subcommand.
    if let Err(e) = scenario::thread_cap() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    match cli.cmd {
        Cmd::Run { config, flags } => match Scenario::load(&config) {
            Ok(sc) => run_scenario(sc, &flags),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Cmd::Accept { dir, replay } => match accept::accept(&dir, replay.as_deref()) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Cmd::Spectrum { flags } => run_scenario(builtin_spectrum(), &flags),
        Cmd::Flow { flags } => run_scenario(builtin_flow(), &flags),
        Cmd::Sweep { flags } => run_scenario(builtin_sweep(), &flags),
    }
}

fn run_scenario(mut sc: Scenario, flags: &RunFlags) -> ExitCode {
    if let Err(e) = sc.apply_overrides(
        flags.seed,
        flags.strict_aliasing,
        flags.tol_overrides.as_deref(),
    ) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let out = flags.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let config_echo = format!("{sc:?}");
    let start = Instant::now();
    match exec::execute(&sc, &out) {
        Ok(verdict) => {
            if let Err(e) = artifact::write_verdict(&out, &verdict) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
            let meta = artifact::Meta {
                scenario: &sc.name,
                wall_seconds: start.elapsed().as_secs_f64(),
                config_echo: &config_echo,
            };
            if let Err(e) = artifact::write_meta(&out, &meta) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
            let passed = verdict.passed();
            for check in &verdict.checks {
                let word = if check.passed { "pass" } else { "FAIL" };
                println!("{}: {} {}", sc.name, check.id, word);
            }
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK_FAILED)
            }
        }
        Err(exec::ExecError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(exec::ExecError::Solver(m)) => {
            eprintln!("error: {m}");
            artifact::write_error(&out, &sc.name, &m);
            ExitCode::from(EXIT_SOLVER)
        }
    }
}

fn builtin(name: &str, kind: Kind) -> Scenario {
    Scenario {
        name: name.to_string(),
        kind,
        geometry: Geometry::Sphere,
        grid: GridSection::default(),
        params: Params::default(),
        tolerances: Tolerances::default(),
    }
}

fn builtin_spectrum() -> Scenario {
    let mut sc = builtin("spectrum", Kind::Spectrum);
    sc.params.kernel = true;
    sc.params.f_response_samples = 20;
    sc
}

fn builtin_flow() -> Scenario {
    let mut sc = builtin("flow", Kind::Flow);
    sc.params.modes = vec![2];
    sc.params.amplitudes = vec![0.05];
    sc
}

fn builtin_sweep() -> Scenario {
    builtin("sweep", Kind::BasinSweep)
}
