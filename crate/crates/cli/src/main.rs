//! `covshift`: estimate a prediction model's risk in a target population.
//!
//! Exit codes: 0 success, 1 usage error, 2 data validation failure,
//! 3 numerical failure.

mod args;
mod commands;
mod failure;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::failure::CliError;

#[derive(Debug, Parser)]
#[command(name = "covshift", version, about = "Prediction-model risk under covariate shift")]
struct Cli {
    /// Worker threads for bootstrap and simulation (0 = all cores).
    /// Results do not depend on this setting.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate target-population risk on one dataset.
    Estimate(commands::estimate::EstimateArgs),
    /// Run the Monte Carlo study and write a summary table.
    Simulate(commands::simulate::SimulateArgs),
    /// Repeated semi-synthetic source/target splits of a labeled dataset.
    SplitEval(commands::split_eval::SplitEvalArgs),
    /// Fit a main-effects logistic model and write a model file.
    ModelFit(commands::model_fit::ModelFitArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure threads: {e}")))?;
    }
    match cli.command {
        Command::Estimate(a) => commands::estimate::run(a),
        Command::Simulate(a) => commands::simulate::run(a),
        Command::SplitEval(a) => commands::split_eval::run(a),
        Command::ModelFit(a) => commands::model_fit::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            ExitCode::from(e.exit_code())
        }
    }
}
