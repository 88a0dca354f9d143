//! `pipeforge` command-line entry point.

mod benchmark;
mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Flag combinations clap cannot check on its own. Exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "pipeforge", version, about = "Evolutionary design of composite ML pipelines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Search for a pipeline on a dataset.
    Compose(ComposeArgs),
    /// Re-compose on new data, seeding the search with a fitted pipeline.
    Adapt(AdaptArgs),
    /// Tune the hyperparameters of a fixed pipeline.
    Tune(TuneArgs),
    /// Node importance, sustainability index and optional self-improvement.
    Analyze(AnalyzeArgs),
    /// Fit a pipeline document and export it with fitted states.
    Fit(FitArgs),
    /// Predict with a fitted export.
    Predict(PredictArgs),
    /// Print a summary of a pipeline document.
    Inspect(InspectArgs),
    /// Compare composed pipelines against single-model baselines on the bundled fixtures.
    Benchmark(BenchmarkArgs),
    /// Write the bundled fixtures as CSV files.
    Fixtures(OutArgs),
    /// Re-run a command from its manifest into a new directory.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// classification, regression or ts.
    #[arg(long)]
    pub task: String,
    /// Target column (the series column for ts).
    #[arg(long)]
    pub target: String,
    /// Forecast horizon; required for ts.
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 200)]
    pub generations: usize,
    #[arg(long, default_value_t = 10)]
    pub pop_size: usize,
    /// Wall-clock budget in seconds.
    #[arg(long, default_value_t = 600.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated: a metric name (MAE, RMSE, F1, ROC_AUC, MAPE), node_count, depth.
    #[arg(long, value_delimiter = ',')]
    pub objectives: Vec<String>,
    /// linear, ensemble or composite.
    #[arg(long, default_value = "composite")]
    pub structure: String,
    #[arg(long, default_value_t = 5)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 15)]
    pub max_nodes: usize,
    /// Cross-validation folds for fitness; 0 uses one holdout split.
    #[arg(long, default_value_t = 0)]
    pub cv_folds: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub no_cache: bool,
    #[arg(long)]
    pub no_regularization: bool,
    /// Also write per-generation wall-clock and memory samples.
    #[arg(long)]
    pub resources: bool,
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ComposeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct AdaptArgs {
    /// Fitted export directory (or its pipeline.json).
    #[arg(long)]
    pub pipeline: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct TuneArgs {
    #[arg(long)]
    pub pipeline: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// serial_isolated, sequential or simultaneous.
    #[arg(long, default_value = "simultaneous")]
    pub strategy: String,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    /// Defaults to the task's metric.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub cv_folds: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub pipeline: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated: delete, replace.
    #[arg(long, value_delimiter = ',', default_value = "delete,replace")]
    pub approaches: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub iterations: usize,
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Apply the best fix and re-analyze up to this many times.
    #[arg(long, default_value_t = 0)]
    pub improve_rounds: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    #[arg(long)]
    pub pipeline: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct PredictArgs {
    /// Fitted export directory.
    #[arg(long)]
    pub pipeline: PathBuf,
    /// CSV with the training-time feature columns; the target column is optional.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct InspectArgs {
    #[arg(long)]
    pub pipeline: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct BenchmarkArgs {
    /// regression, classification, timeseries or all.
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 20)]
    pub generations: usize,
    #[arg(long, default_value_t = 10)]
    pub pop_size: usize,
    #[arg(long, default_value_t = 30)]
    pub tune_iterations: usize,
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
    #[arg(long, default_value_t = 600.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Start the search from random pipelines only.
    #[arg(long)]
    pub no_baseline_seeding: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(cli.command, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
