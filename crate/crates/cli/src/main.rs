//! `feedback-learn`: runs the feedback-learning experiments and writes
//! their metrics as CSV and JSON.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use feedback_learn::{Activation, SignPolicy};

#[derive(Parser, Debug)]
#[command(
    name = "feedback-learn",
    version,
    about = "Feedback-loop learning experiments"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the experiments. Each subcommand rejects the ones it
/// does not use.
#[derive(Args, Debug, Default, Clone)]
pub struct Common {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed (falls back to FEEDBACK_LEARN_SEED, then 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Forward gain A.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub gain: Option<f64>,
    #[arg(long, global = true)]
    pub rate: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    /// sign | beta | odd-power:N | magnitude | signed-diff
    #[arg(long, global = true)]
    pub policy: Option<SignPolicy>,
    /// identity | tanh | softmax | leaky-relu:SLOPE | staircase:W:H
    #[arg(long, global = true)]
    pub activation: Option<Activation>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Use only the first N training samples.
    #[arg(long, global = true)]
    pub subset: Option<usize>,
    /// Average the error matrix over the batch instead of summing.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub normalize_error: Option<bool>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Invert a scalar function with the feedback loop.
    Invert(commands::InvertArgs),
    /// Staircase regression: feedback versus gradient descent.
    StaircaseDemo(commands::StaircaseArgs),
    /// Train a deep classifier on IDX digit data.
    Mnist(commands::MnistArgs),
    /// Check the beta-policy error matrix against the squared-error gradient.
    CompareGd(commands::CompareGdArgs),
    /// Fit a single layer to synthetic linear data.
    Regress(commands::RegressArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Invert(a) => commands::invert(&cli.common, a),
        Command::StaircaseDemo(a) => commands::staircase(&cli.common, a),
        Command::Mnist(a) => commands::mnist(&cli.common, a),
        Command::CompareGd(a) => commands::compare_gd(&cli.common, a),
        Command::Regress(a) => commands::regress(&cli.common, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
