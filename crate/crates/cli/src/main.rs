mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::{EvalArgs, FillArgs, GridArgs, PrepareArgs, TrainArgs};

/// A problem with how the tool was invoked (exit status 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "gapfill", version, about = "Train sequence RNNs and fill gaps in sequences")]
struct Cli {
    /// JSON file with default options (a run manifest also works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a corpus into train/test files and compute unigram statistics.
    Prepare(PrepareArgs),
    /// Train a unidirectional or bidirectional model.
    Train(TrainArgs),
    /// Fill one gap with one strategy.
    Fill(FillArgs),
    /// Score strategies on sampled gaps of a test corpus.
    Eval(EvalArgs),
    /// Pick a step size by validation loss.
    Gridsearch(GridArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let config = cli.config.as_deref();
    let result = match &cli.command {
        Command::Prepare(a) => commands::prepare(config, a, &cli.out),
        Command::Train(a) => commands::train(config, a, &cli.out),
        Command::Fill(a) => commands::fill(config, a, &cli.out),
        Command::Eval(a) => commands::eval(config, a, &cli.out),
        Command::Gridsearch(a) => commands::gridsearch(config, a, &cli.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(u) = e.downcast_ref::<UsageError>() {
                eprintln!("error: {u}");
                ExitCode::from(2)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        }
    }
}
