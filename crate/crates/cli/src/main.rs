use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};

mod commands;
mod output;

use commands::{
    AlignArgs, CorrelateArgs, DecomposeArgs, DiagnoseArgs, DistancesArgs, GenPromptsArgs, ReportArgs, SimulateArgs,
};

/// Residual-stream decomposition and in-context-learning diagnostics.
#[derive(Debug, Parser)]
#[command(name = "subspace-probe", version)]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample prompts from a task's pair pool.
    GenPrompts(GenPromptsArgs),
    /// Run the toy transformer and write a residual-stream dump.
    Simulate(SimulateArgs),
    /// Fit ICA or dictionary components to one role's residuals.
    Decompose(DecomposeArgs),
    /// Compare separator and answer components.
    Distances(DistancesArgs),
    /// Trace final-separator coding coefficients across layers.
    Align(AlignArgs),
    /// Pair component distances with final-layer coefficients.
    Correlate(CorrelateArgs),
    /// R-ratio diagnosis of correct versus incorrect prompts.
    Diagnose(DiagnoseArgs),
    /// Render CSV tables and SVG heatmaps from JSON results.
    Report(ReportArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set thread count: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::GenPrompts(a) => commands::gen_prompts(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Decompose(a) => commands::decompose(a),
        Command::Distances(a) => commands::distances(a),
        Command::Align(a) => commands::align(a),
        Command::Correlate(a) => commands::correlate(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
