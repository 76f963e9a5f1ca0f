mod commands;
mod dataset;
mod error;
mod report;
mod stats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Attitude-independent magnetometer calibration.
#[derive(Debug, Parser)]
#[command(name = "magcal", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a measurement log and write its true calibration alongside.
    Simulate {
        /// Scenario JSON; the reference scenario when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV; the truth is written to `<stem>.truth.json`.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario sample count.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Estimate calibration parameters from a measurement CSV.
    Calibrate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Both)]
        method: MethodArg,
        /// Report path; with `both`, `<stem>.nm.json`, `<stem>.ml.json` and
        /// `<stem>.comparison.json` are written next to it.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Apply a calibration report to a measurement CSV.
    Apply {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write a histogram of calibrated magnitudes.
        #[arg(long)]
        histogram: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
    /// Score a report against a reference report.
    Metrics {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo accuracy study.
    Montecarlo {
        #[command(flatten)]
        common: ExperimentArgs,
        #[arg(long, default_value_t = 50)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Divergence counts under perturbed initial estimates.
    Sensitivity {
        #[command(flatten)]
        common: ExperimentArgs,
        #[arg(long, default_value_t = 50)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated perturbation fractions.
        #[arg(long, value_delimiter = ',', default_values_t = magcal::experiments::DEFAULT_ALPHAS)]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = magcal::experiments::NM_DIVERGENCE_THRESHOLD)]
        nm_threshold: f64,
        #[arg(long, default_value_t = magcal::experiments::ML_DIVERGENCE_THRESHOLD)]
        ml_threshold: f64,
    },
    /// Median solve times versus sample count.
    Timing {
        #[command(flatten)]
        common: ExperimentArgs,
        #[arg(long = "n", value_delimiter = ',', default_values_t = [100usize, 300, 1000])]
        n_values: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Largest N for which the dense ML solver is timed.
        #[arg(long, default_value_t = 100)]
        dense_max_n: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Nm,
    Ml,
    Both,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 50)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-12)]
    objective_tolerance: f64,
    #[arg(long, default_value_t = 1e-10)]
    step_tolerance: f64,
    #[arg(long, default_value_t = 1e-10)]
    gradient_tolerance: f64,
}

impl SolverArgs {
    fn options(&self) -> magcal::SolveOptions<f64> {
        magcal::SolveOptions {
            max_iterations: self.max_iterations,
            objective_tolerance: self.objective_tolerance,
            step_tolerance: self.step_tolerance,
            gradient_tolerance: self.gradient_tolerance,
        }
    }
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Scenario JSON; the reference scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn run(cli: Cli) -> error::CliResult<()> {
    use commands::*;
    match cli.command {
        Command::Simulate { config, out, seed, n } => simulate(config.as_deref(), &out, seed, n),
        Command::Calibrate { input, method, out, solver } => {
            let methods = match method {
                MethodArg::Nm => Methods::Nm,
                MethodArg::Ml => Methods::Ml,
                MethodArg::Both => Methods::Both,
            };
            calibrate(&input, methods, &out, &solver.options())
        }
        Command::Apply { report, input, out, histogram, bins } => {
            apply(&report, &input, &out, histogram.as_deref(), bins)
        }
        Command::Metrics { estimate, reference, out } => metrics(&estimate, &reference, out.as_deref()),
        Command::Montecarlo { common, runs, seed } => {
            montecarlo(common.config.as_deref(), &common.out_dir, runs, seed)
        }
        Command::Sensitivity { common, runs, seed, alphas, nm_threshold, ml_threshold } => sensitivity(
            common.config.as_deref(),
            &common.out_dir,
            &alphas,
            runs,
            seed,
            nm_threshold,
            ml_threshold,
        ),
        Command::Timing { common, n_values, repeats, dense_max_n } => {
            timing(common.config.as_deref(), &common.out_dir, &n_values, repeats, dense_max_n)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
