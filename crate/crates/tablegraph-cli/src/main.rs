//! `tablegraph`: generate synthetic table datasets, train pair
//! classifiers, and evaluate, predict, and visualize table structure.
//!
//! Exit codes: 0 success, 2 configuration error, 3 io error, 4 numeric
//! failure during training or inference.

mod commands;
mod error;
mod render;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use error::AppError;

#[derive(Parser)]
#[command(
    name = "tablegraph",
    version,
    about = "Table structure recognition on synthetic documents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of synthetic table images with ground truth.
    Generate(GenerateArgs),
    /// Train a pair-classification model on a generated dataset.
    Train(TrainArgs),
    /// Score a checkpoint (or the ground-truth oracle) on a dataset.
    Evaluate(EvaluateArgs),
    /// Run inference on one sample and print its reconstructed structure.
    Predict(PredictArgs),
    /// Render cell/row/column overlays for one sample.
    Visualize(VisualizeArgs),
}

#[derive(clap::Args)]
struct GenerateArgs {
    /// Output dataset directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Number of samples to generate.
    #[arg(long)]
    count: usize,
    /// Table category: 1, 2, 3, 4, or "mixed" (round-robin).
    #[arg(long, default_value = "mixed")]
    category: String,
    /// Master seed; sample i uses a stream derived from (seed, i).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generator geometry config (JSON). Overrides --desk.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the small fast preset instead of the full-page default.
    #[arg(long)]
    desk: bool,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Dataset directory containing manifest.jsonl.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for model.ckpt, config.json, and runlog.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Architecture: fcnn, dgcnn, or gravnet.
    #[arg(long)]
    model: Option<String>,
    /// Parameter precision: f32 or f64.
    #[arg(long)]
    dtype: Option<String>,
    /// Optimizer updates to run.
    #[arg(long)]
    steps: Option<u64>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Seed for init, sample order, and pair draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Pairs sampled per vertex and head each step.
    #[arg(long)]
    pairs_per_vertex: Option<usize>,
    /// Save a checkpoint every N steps (0 = only at the end).
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Write a runlog line every N steps (0 = off).
    #[arg(long)]
    log_every: Option<u64>,
    /// Combined model and train config (JSON); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue from an existing checkpoint instead of initializing.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Print a progress line every N steps (0 = quiet).
    #[arg(long, default_value_t = 50)]
    print_every: u64,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    /// Dataset directory to score.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to evaluate (omit with --oracle).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Model config; defaults to config.json beside the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the full report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the report as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Score the ground-truth decode instead of a model (pipeline check).
    #[arg(long)]
    oracle: bool,
    /// Pair-vote symmetrization: or / and.
    #[arg(long, default_value = "or")]
    symmetrize: String,
    /// Aggregation across samples: macro / micro.
    #[arg(long, default_value = "macro")]
    averaging: String,
}

#[derive(clap::Args)]
struct PredictArgs {
    /// Sample stem or path to its .json/.pgm file.
    #[arg(long)]
    sample: PathBuf,
    /// Checkpoint to run (omit with --oracle).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Model config; defaults to config.json beside the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Decode the ground truth instead of running a model.
    #[arg(long)]
    oracle: bool,
    /// Pair-vote symmetrization: or / and.
    #[arg(long, default_value = "or")]
    symmetrize: String,
}

#[derive(clap::Args)]
struct VisualizeArgs {
    /// Sample stem or path to its .json/.pgm file.
    #[arg(long)]
    sample: PathBuf,
    /// Checkpoint to visualize; omit to visualize the ground truth.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Model config; defaults to config.json beside the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output prefix: writes PREFIX-cells.ppm, -rows.ppm, -cols.ppm.
    #[arg(long)]
    out: PathBuf,
    /// Pair-vote symmetrization: or / and.
    #[arg(long, default_value = "or")]
    symmetrize: String,
}

fn run(cli: Cli) -> Result<(), AppError> {
    match &cli.command {
        Command::Generate(args) => commands::cmd_generate(args),
        Command::Train(args) => commands::cmd_train(args),
        Command::Evaluate(args) => commands::cmd_evaluate(args),
        Command::Predict(args) => commands::cmd_predict(args),
        Command::Visualize(args) => commands::cmd_visualize(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
