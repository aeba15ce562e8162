//! `fracsde`: command-line front end for the fracsde library.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{AvgfieldArgs, ExperimentCommand, PerturbArgs, PvarArgs, ReflectArgs, SampleFbmArgs, SolveArgs};

/// Fractional Brownian paths, reflection and perturbation maps, p-variation,
/// averaged fields, singular-drift solvers and verification campaigns.
#[derive(Debug, Parser)]
#[command(name = "fracsde", version, propagate_version = true)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Worker threads (default: available cores)
    #[arg(long, global = true, value_name = "N", help_heading = "Global options")]
    threads: Option<usize>,
    /// Master seed; overrides any seed in a config file
    #[arg(long, global = true, value_name = "S", help_heading = "Global options")]
    seed: Option<u64>,
    /// Also write tidy long-format CSV for plotting to this file
    #[arg(long, global = true, value_name = "FILE", help_heading = "Global options")]
    emit_plot_data: Option<std::path::PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample fractional Brownian motion paths to CSV
    SampleFbm(SampleFbmArgs),
    /// Apply the Skorokhod map of a box to paths
    Reflect(ReflectArgs),
    /// Solve the running max/min perturbation relation for paths
    Perturb(PerturbArgs),
    /// Print the p-variation of each path
    Pvar(PvarArgs),
    /// Tabulate the averaged field of a drift along a path
    Avgfield(AvgfieldArgs),
    /// Solve a constrained singular-drift equation driven by fBm
    Solve(SolveArgs),
    /// Run or list verification campaigns
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::SampleFbm(a) => commands::sample_fbm(a, &cli.global),
        Command::Reflect(a) => commands::reflect(a, &cli.global),
        Command::Perturb(a) => commands::perturb(a, &cli.global),
        Command::Pvar(a) => commands::pvar(a, &cli.global),
        Command::Avgfield(a) => commands::avgfield(a, &cli.global),
        Command::Solve(a) => commands::solve(a, &cli.global),
        Command::Experiment(c) => commands::experiment(c, &cli.global),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
