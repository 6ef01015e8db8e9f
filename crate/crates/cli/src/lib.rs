//! Command-line front end: `run`, `sweep`, `check` and `plot`.
//!
//! Exit status is 0 on success, 1 when a check fails, is refused, or a run
//! diverges, and 2 on any error (bad config, unreadable input).

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod plot;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, parse_seed_range, ExperimentConfig, Mode, DEFAULT_CHECK_SEEDS, DEFAULT_RUN_SEEDS};
use crate::error::CliError;
use crate::experiment::{build_problem, run_checks, run_sweep, run_trajectories, Outcome};
use crate::plot::{emit_plot, Metric};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "reshuffle", version, about = "Shuffling-based SGD experiments")]
struct Cli {
    /// Worker threads; falls back to RESHUFFLE_THREADS, then all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run methods over a seed ensemble and write trajectory CSVs.
    Run(ExperimentArgs),
    /// Tabulate the shuffling variance over step sizes or minibatch sizes.
    Sweep(ExperimentArgs),
    /// Check convergence bounds and write report.csv.
    Check(ExperimentArgs),
    /// Render summary CSVs as an SVG line plot.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Half-open seed range `a..b`, overriding the config.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// dist_sq, f_value or grad_norm_sq.
    #[arg(long, default_value = "dist_sq")]
    metric: String,
    #[arg(long, default_value = "")]
    title: String,
}

/// Parses `args` (program name first), runs, and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(0) => EXIT_OK,
        Ok(failures) => {
            eprintln!("reshuffle: {failures} failed check(s) or diverged run(s)");
            EXIT_FAILED
        }
        Err(e) => {
            eprintln!("reshuffle: {e}");
            EXIT_ERROR
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("RESHUFFLE_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Invalid(format!("RESHUFFLE_THREADS=`{v}` is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn execute(cli: Cli) -> Result<usize, CliError> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(CliError::Invalid("--threads must be positive".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Run(a) => experiment(&a, Mode::Trajectories),
        Command::Sweep(a) => experiment(&a, Mode::VarianceSweep),
        Command::Check(a) => experiment(&a, Mode::BoundCheck),
        Command::Plot(a) => {
            let metric =
                Metric::parse(&a.metric).ok_or_else(|| CliError::Invalid(format!("unknown metric `{}`", a.metric)))?;
            let inputs: Vec<&Path> = a.inputs.iter().map(PathBuf::as_path).collect();
            emit_plot(&inputs, &a.out, metric, &a.title)?;
            println!("{}", a.out.display());
            Ok(0)
        }
    }
}

fn experiment(args: &ExperimentArgs, mode: Mode) -> Result<usize, CliError> {
    let config = load_config(&args.config)?;
    if let Some(m) = config.mode {
        if m != mode {
            return Err(CliError::Config {
                path: args.config.clone(),
                message: format!("mode `{}` does not match this subcommand", m.name()),
            });
        }
    }
    let seeds = match &args.seeds {
        Some(range) => parse_seed_range(range)?,
        None => config.seed_list(match mode {
            Mode::BoundCheck => DEFAULT_CHECK_SEEDS,
            _ => DEFAULT_RUN_SEEDS,
        }),
    };
    let out = args
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let outcome = dispatch(&config, &args.config, mode, &seeds, &out)?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    Ok(outcome.failures)
}

fn dispatch(
    config: &ExperimentConfig,
    config_path: &Path,
    mode: Mode,
    seeds: &[u64],
    out: &Path,
) -> Result<Outcome, CliError> {
    let base = config_path.parent().unwrap_or(Path::new("."));
    let problem = build_problem(&config.problem, base)?;
    match mode {
        Mode::Trajectories => run_trajectories(config, problem.as_ref(), seeds, out),
        Mode::BoundCheck => run_checks(config, problem.as_ref(), seeds, out),
        Mode::VarianceSweep => run_sweep(config, problem.as_ref(), out),
    }
}
