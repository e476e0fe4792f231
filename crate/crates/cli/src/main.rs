//! `obsplan` command-line front end.
//!
//! ```text
//! obsplan solve       --config run.toml --out results/
//! obsplan evaluate    --config run.toml --out results/ --method cmdp --seed 3
//! obsplan export-lp   --config run.toml --out lp/
//! obsplan sample-traj --config run.toml --out trajs/ --horizon 120
//! ```
//!
//! `OBSPLAN_THREADS` sets the worker thread count (default: all cores).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use obsplan::config::{ConfigFile, ExperimentConfig, MethodChoice};
use obsplan::experiment;

#[derive(Parser)]
#[command(name = "obsplan", version, about = "Observation planning for a free-flying camera robot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan and solve only; writes policies, predicted values and solve times.
    Solve(Common),
    /// Plan, solve, roll out against evaluation trajectories and aggregate.
    Evaluate(Common),
    /// Write the constrained occupancy LP of every task and scenario as MPS.
    ExportLp(Common),
    /// Write the sampled planning and evaluation trajectories as CSV.
    SampleTraj(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured method.
    #[arg(long, value_parser = ["momdp", "cmdp", "both"])]
    method: Option<String>,
    /// Override the horizon, in epochs.
    #[arg(long, value_name = "EPOCHS")]
    horizon: Option<usize>,
    /// Worker threads.
    #[arg(long, env = "OBSPLAN_THREADS", hide = true)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut file = ConfigFile::load(&self.config)?;
        if let Some(seed) = self.seed {
            file.seed = seed;
        }
        if let Some(method) = &self.method {
            file.method = method.parse::<MethodChoice>().map_err(anyhow::Error::msg)?;
        }
        if self.horizon.is_some() {
            file.horizon = self.horizon;
        }
        Ok(file.resolve()?)
    }
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        anyhow::ensure!(n >= 1, "OBSPLAN_THREADS must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn report(out: &Path, what: &str, count: usize) {
    println!("wrote {count} {what} to {}", out.display());
}

fn run(cli: Cli) -> Result<()> {
    let (Command::Solve(args)
    | Command::Evaluate(args)
    | Command::ExportLp(args)
    | Command::SampleTraj(args)) = &cli.command;
    init_threads(args.threads)?;
    let cfg = args.load()?;
    match &cli.command {
        Command::Solve(_) => {
            let solved = experiment::run_solve(&cfg, &args.out)?;
            report(&args.out, "policies", solved.len());
        }
        Command::Evaluate(_) => {
            let r = experiment::run_experiment(&cfg, &args.out)?;
            for a in &r.aggregates {
                let m = a.mean;
                println!(
                    "{:<12} {:<10} {:<6} r={:8.3} c0={:8.3} c1={:8.3} c2={:8.3}",
                    a.task, a.scenario, a.method.name(), m[0], m[1], m[2], m[3]
                );
            }
            report(&args.out, "rollouts", r.runs.len());
        }
        Command::ExportLp(_) => {
            let files = experiment::export_lps(&cfg, &args.out)?;
            report(&args.out, "linear programs", files.len());
        }
        Command::SampleTraj(_) => {
            let files = experiment::export_trajectories(&cfg, &args.out)?;
            report(&args.out, "trajectories", files.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// Joins the error chain, skipping causes the outer message already quotes.
fn describe(e: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}
