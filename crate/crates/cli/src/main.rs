mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use levy_perron::perron::SweepMode;

use config::RunConfig;
use stages::{Output, StageOutcome};

#[derive(Parser)]
#[command(name = "levy-perron", version, about = "Certify, solve and diagnose nonlocal Bellman-Isaacs problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Solve even when the kernel-class checks fail.
    #[arg(long, global = true)]
    force: bool,
    /// Sweep mode (overrides `solver.mode`).
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Solution file for `diagnose` (defaults to OUT/solution.csv).
    #[arg(long, global = true)]
    solution: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Kernel-class, cone and barrier certification.
    Certify,
    /// Certification, envelope construction and the Perron iteration.
    Solve,
    /// Hölder and weak Harnack diagnostics of a solution file.
    Diagnose,
    /// Every stage in order.
    All,
}

#[derive(ValueEnum, Clone, Copy)]
enum ModeArg {
    Jacobi,
    GaussSeidel,
}

fn report(stage: &str, outcome: &StageOutcome) {
    if outcome.pass {
        eprintln!("{stage}: pass");
    } else {
        eprintln!("{stage}: FAIL");
        for f in &outcome.failures {
            eprintln!("  {f}");
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let path = cli.config.as_ref().context("--config is required")?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(m) = cli.mode {
        cfg.solver.mode = match m {
            ModeArg::Jacobi => SweepMode::Jacobi,
            ModeArg::GaussSeidel => SweepMode::GaussSeidel,
        };
    }
    let root = cli.out.clone().or_else(|| cfg.output.clone()).context("no output directory: give --out or `output`")?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("cannot configure the thread pool")?;
    }
    let setup = cfg.setup()?;
    let out = Output::create(&root)?;
    out.json("config_echo.json", &cfg)?;

    let mut ok = true;
    let cmd = cli.command;
    if matches!(cmd, Command::Certify | Command::Solve | Command::All) {
        let cert = stages::certify(&cfg, &setup, &out)?;
        report("certify", &cert.outcome);
        ok &= cert.outcome.pass;
        if matches!(cmd, Command::Solve | Command::All) {
            if !cert.outcome.pass && !cli.force {
                eprintln!("solve: skipped because certification failed (use --force to override)");
                return Ok(false);
            }
            let Some(barrier) = &cert.barrier else {
                bail!("no boundary barrier certified; envelopes cannot be built even with --force");
            };
            let solved = stages::solve(&cfg, &setup, barrier, &out)?;
            report("solve", &solved);
            ok &= solved.pass;
        }
    }
    if matches!(cmd, Command::Diagnose | Command::All) {
        let sol = cli.solution.clone().unwrap_or_else(|| out.path("solution.csv"));
        if !sol.exists() {
            bail!("solution file {} not found; run `solve` first", sol.display());
        }
        let w = stages::load_solution(&setup, &sol)?;
        let diag = stages::diagnose(&cfg, &setup, &w, &out)?;
        report("diagnose", &diag);
        ok &= diag.pass;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
