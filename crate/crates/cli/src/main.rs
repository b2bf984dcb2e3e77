use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fcl_core::harness::{
    self, check, constitutive_table, render_csv, render_json, simulate, ConstitutiveTableSpec,
    ExperimentConfig, ExperimentKind,
};
use fcl_core::{Error, Result, SimulationConfig};

#[derive(Parser)]
#[command(name = "fcl", version, about = "Coupled Forchheimer flow lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write snapshots, energies and metadata.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate K1, K1', H and the bounds of K1 for a Forchheimer polynomial.
    Constitutive {
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; a JSON twin is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment driver.
    Experiment {
        /// simulate, convergence, uniqueness, stability-sweep, gradient-stability or check.
        kind: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the self-check suite.
    Check {
        #[arg(long)]
        quick: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run_simulate(config: &Path, out: Option<PathBuf>) -> Result<i32> {
    let cfg = SimulationConfig::load(config)?;
    let dir = out
        .or_else(|| cfg.output.dir.clone().map(PathBuf::from))
        .ok_or_else(|| Error::Validation("no output directory: pass --out or set output.dir".into()))?;
    let sim = simulate(&cfg)?;
    let files = sim.write(&dir)?;
    log::info!("wrote {} files to {}", files.len(), dir.display());
    if let Some(f) = &sim.metadata.failure {
        eprintln!("simulation stopped early: {f}");
        return Ok(3);
    }
    Ok(0)
}

fn run_constitutive(config: &Path, out: &Path) -> Result<i32> {
    let spec = ConstitutiveTableSpec::from_json(&fs::read_to_string(config)?)?;
    let table = constitutive_table(&spec)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, render_csv(&table))?;
    fs::write(out.with_extension("json"), render_json(&table)?)?;
    Ok(0)
}

fn run_experiment(kind: &str, config: Option<PathBuf>, out: &Path) -> Result<i32> {
    let kind: ExperimentKind = kind.parse()?;
    let mut cfg = match config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::with_kind(kind),
    };
    cfg.kind = kind;
    let outcome = harness::run_experiment(&cfg, out)?;
    for f in outcome.numerical_failures.iter().chain(&outcome.invariant_failures) {
        eprintln!("{f}");
    }
    log::info!("{} wrote {} files", kind.name(), outcome.files.len());
    Ok(outcome.exit_code())
}

fn run_check(quick: bool, out: Option<PathBuf>) -> Result<i32> {
    let report = check::run_check_suite(quick);
    for c in &report.checks {
        println!("{:<34} {}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
    if let Some(dir) = out {
        harness::write_pair(&report, &dir, "check_report")?;
    }
    Ok(if report.passed { 0 } else { 1 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out } => run_simulate(&config, out),
        Command::Constitutive { config, out } => run_constitutive(&config, &out),
        Command::Experiment { kind, config, out } => run_experiment(&kind, config, &out),
        Command::Check { quick, out } => run_check(quick, out),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
