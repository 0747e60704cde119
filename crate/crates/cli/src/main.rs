//! `moonlite`: generate synthetic attribute data, train and evaluate
//! mixed-objective networks, and run seeded comparisons.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 unreadable or
//! malformed data, 4 numerical failure during training.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "moonlite",
    version,
    about = "Mixed-objective multi-label training on synthetic attributes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and split it into train/val/test.
    GenData(GenDataArgs),
    /// Train a joint network (or separate networks) on a generated dataset.
    Train(TrainArgs),
    /// Evaluate saved networks on one split of a dataset.
    Eval(EvalArgs),
    /// Print the adaptation weights for a dataset and target distribution.
    Weights(WeightsArgs),
    /// Run every configured arm on every seed and summarize.
    Compare(CompareArgs),
}

#[derive(Args)]
pub struct GenDataArgs {
    /// Latent dimension k.
    #[arg(long, default_value_t = 8)]
    pub latent_dim: usize,
    /// Feature dimension d.
    #[arg(long, default_value_t = 16)]
    pub features: usize,
    /// Number of attributes M; defaults to the number of prevalences given.
    #[arg(long)]
    pub attributes: Option<usize>,
    /// Comma-separated positive-class prevalences, one per attribute.
    #[arg(long, value_delimiter = ',', conflicts_with = "prevalence_file")]
    pub prevalence: Option<Vec<f64>>,
    /// JSON file holding an array of prevalences.
    #[arg(long)]
    pub prevalence_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub label_noise: f64,
    /// Standard deviation of the additive feature noise.
    #[arg(long, default_value_t = 1.0)]
    pub feature_noise: f64,
    /// Total number of samples before splitting.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train/val/test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    pub split: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Directory written by `gen-data`.
    #[arg(long)]
    pub data: PathBuf,
    /// Training config (JSON); defaults apply to omitted keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `source`, `balanced`, or a JSON file of {"name", "positive"} entries.
    /// Overrides the config's target.
    #[arg(long)]
    pub target: Option<String>,
    /// Train one single-output network per attribute.
    #[arg(long)]
    pub separate: bool,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Checkpoint file or directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Which split to evaluate.
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
    pub split: String,
    /// Target for the balanced error: `source` (the evaluated split's own
    /// class masses), `balanced`, or a JSON file.
    #[arg(long)]
    pub target: String,
    /// Leave out attributes with no positives or no negatives instead of
    /// failing.
    #[arg(long)]
    pub skip_degenerate: bool,
    /// Directory for report.csv and report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct WeightsArgs {
    /// Directory written by `gen-data`; the source is its training split.
    #[arg(long)]
    pub data: PathBuf,
    /// `source`, `balanced`, or a JSON file.
    #[arg(long, default_value = "balanced")]
    pub target: String,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config's output_dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Weights(a) => commands::weights(a),
        Command::Compare(a) => commands::compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("moonlite: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
