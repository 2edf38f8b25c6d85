//! Command-line frontend for the cross-lingual scaling toolkit.
//!
//! Subcommands: `fit` (experiment log to model file), `predict` (losses for a
//! mixture under a model), `optimize` (allocation for a token budget),
//! `simulate` (synthetic experiment logs), and `benchmark` (closed-loop
//! sample/simulate/fit/optimize run scored against a grid oracle).
//!
//! Primary outputs are deterministic: rerunning a command with the same
//! inputs, seed, and worker count writes byte-identical files. Progress and
//! tables go to stderr; the process exits 0 exactly when the command
//! succeeded.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use climb_cli::commands::{
    self, cmd_benchmark, cmd_fit, cmd_optimize, cmd_predict, cmd_simulate, parse_budget,
};
use climb_cli::formats::ConfigFile;

#[derive(Parser)]
#[command(
    name = "climb",
    version,
    about = "Fit cross-lingual scaling laws, predict losses, and optimize language allocations"
)]
struct Cli {
    /// Size of the worker thread pool (defaults to the number of cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Random seed; overrides the CLIMB_SEED environment variable and any
    /// seed found in an input file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// JSON configuration file with fit, optimizer, and benchmark overrides.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model from an experiment-log CSV.
    Fit(FitArgs),
    /// Predict per-language losses for a mixture under a fitted model.
    Predict(PredictArgs),
    /// Compute the optimal language allocation for a token budget.
    Optimize(OptimizeArgs),
    /// Generate a synthetic experiment log from a world specification.
    Simulate(SimulateArgs),
    /// Run the closed demonstration loop and score it against a grid oracle.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Experiment-log CSV to ingest.
    #[arg(long)]
    input: PathBuf,
    /// Where to write the fitted model JSON.
    #[arg(long)]
    output: PathBuf,
    /// Huber knee width for all fitting stages.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct PredictArgs {
    /// Mixture as code=share pairs, e.g. "en=0.5,de=0.3,fr=0.2".
    mixture: String,
    /// Fitted model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Token budget; accepts K/M/B/T suffixes, e.g. 20B.
    #[arg(long)]
    budget: String,
    /// Importance weights as code=value pairs; unlisted languages get 1.
    #[arg(long)]
    weights: Option<String>,
    /// Write the prediction JSON here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Fitted model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Token budget; accepts K/M/B/T suffixes, e.g. 20B.
    #[arg(long)]
    budget: String,
    /// Importance weights as code=value pairs; unlisted languages get 1.
    #[arg(long)]
    weights: Option<String>,
    /// Strength of the pull toward the interaction-free direction.
    #[arg(long)]
    rho: Option<f64>,
    /// Write the allocation JSON here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// World specification JSON (explicit model or sampling instructions).
    #[arg(long)]
    input: PathBuf,
    /// Where to write the experiment-log CSV.
    #[arg(long)]
    output: PathBuf,
    /// Multiplicative noise level; overrides the specification.
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Planning token budget; accepts K/M/B/T suffixes.
    #[arg(long)]
    budget: Option<String>,
    /// Importance weights as code=value pairs (codes are l0, l1, ...).
    #[arg(long)]
    weights: Option<String>,
    /// Strength of the pull toward the interaction-free direction.
    #[arg(long)]
    rho: Option<f64>,
    /// Oracle grid resolution per simplex edge.
    #[arg(long = "grid-res")]
    grid_res: Option<u32>,
    /// Multiplicative noise level for the simulated experiment log.
    #[arg(long)]
    noise: Option<f64>,
    /// Where to write the benchmark report JSON.
    #[arg(long)]
    output: PathBuf,
}

fn load_config(path: Option<&PathBuf>) -> Result<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config file {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("{} is not a valid config file", p.display()))
        }
    }
}

fn dispatch(cli: &Cli, config: &ConfigFile, argv: &[String]) -> Result<()> {
    match &cli.command {
        Command::Fit(args) => {
            let fit_config = commands::resolve_fit_config(config, args.delta);
            cmd_fit(&args.input, &args.output, fit_config, argv)
        }
        Command::Predict(args) => cmd_predict(
            &args.model,
            &args.mixture,
            parse_budget(&args.budget)?,
            args.weights.as_deref(),
            args.output.as_deref(),
            argv,
        ),
        Command::Optimize(args) => {
            let optimizer = commands::resolve_optimizer_config(config, args.rho, cli.seed)?;
            cmd_optimize(
                &args.model,
                parse_budget(&args.budget)?,
                args.weights.as_deref(),
                optimizer,
                args.output.as_deref(),
                argv,
            )
        }
        Command::Simulate(args) => {
            cmd_simulate(&args.input, &args.output, cli.seed, args.noise, argv)
        }
        Command::Benchmark(args) => {
            let budget = args.budget.as_deref().map(parse_budget).transpose()?;
            cmd_benchmark(
                config,
                cli.seed,
                budget,
                args.noise,
                args.grid_res,
                args.rho,
                args.weights.as_deref(),
                &args.output,
                argv,
            )
        }
    }
}

fn run() -> Result<()> {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let config = load_config(cli.config.as_ref())?;
    match cli.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("cannot build the worker thread pool")?;
            pool.install(|| dispatch(&cli, &config, &argv))
        }
        None => dispatch(&cli, &config, &argv),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
