//! The `erbm` command line: ingest ratings, train, evaluate, recommend,
//! explain and sweep.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence,
//! 4 sweep finished with failed cells.

pub mod commands;
pub mod config;
pub mod explain;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use explain::{render_explanation, ExplanationError, ExplanationStatement};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{failed} of {total} sweep cells failed")]
    PartialGrid { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::PartialGrid { .. } => 4,
        }
    }
}

impl From<erbm::Error> for CliError {
    fn from(e: erbm::Error) -> Self {
        match e {
            erbm::Error::Divergence { .. } => CliError::Divergence(e.to_string()),
            erbm::Error::Config(_) | erbm::Error::UnknownUser(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ExplanationError> for CliError {
    fn from(e: ExplanationError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "erbm", version, about = "Explainable RBM recommenders on explicit ratings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a ratings file and write its temporal train/test split.
    Ingest(IngestArgs),
    /// Train an RBM on a split and write the model file.
    Train(TrainArgs),
    /// Score a model or baseline on the held-out ratings.
    Evaluate(EvaluateArgs),
    /// Print a user's top-n unrated items.
    Recommend(RecommendArgs),
    /// Print neighbor-style explanations for a user's items.
    Explain(ExplainArgs),
    /// Run an f/k sweep described by a config file and write the report.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Split directory written by `ingest`.
    #[arg(long, env = "ERBM_DATA_DIR")]
    pub data: PathBuf,
    /// Largest rating value.
    #[arg(long, default_value_t = erbm::dataset::DEFAULT_SCALE)]
    pub scale: u8,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Ratings file with `user item rating timestamp` lines.
    #[arg(long)]
    pub ratings: PathBuf,
    /// Directory for train.tsv and test.tsv.
    #[arg(long, env = "ERBM_DATA_DIR")]
    pub out: PathBuf,
    /// Field separator: a single character, or tab, comma, space.
    #[arg(long, default_value = "tab")]
    pub separator: String,
    #[arg(long, default_value_t = erbm::dataset::DEFAULT_SCALE)]
    pub scale: u8,
    /// Share of each user's most recent ratings held out.
    #[arg(long, default_value_t = erbm::dataset::DEFAULT_TEST_FRACTION)]
    pub test_fraction: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Also write the explainability matrix here.
    #[arg(long)]
    pub explainability_out: Option<PathBuf>,
    /// Neighborhood size for explainability scores.
    #[arg(long, default_value_t = erbm::neighborhood::DEFAULT_K)]
    pub k: usize,
    /// Hidden units.
    #[arg(long, short = 'f', default_value_t = 50)]
    pub hidden: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Learning rate for W, a and b.
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    /// Learning rate for D and c; defaults to --learning-rate.
    #[arg(long)]
    pub learning_rate_d: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub cd_steps: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub momentum_initial: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum_final: f64,
    /// First epoch (0-based) using the final momentum.
    #[arg(long, default_value_t = 5)]
    pub momentum_switch_epoch: usize,
    /// L2 decay on W and D.
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    /// Standard deviation of the initial weights.
    #[arg(long, default_value_t = 0.01)]
    pub init_std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// conditioned (E-RBM) or disabled (plain RBM).
    #[arg(long, default_value = "conditioned")]
    pub mode: String,
    /// clamped or reconstructed.
    #[arg(long, default_value = "clamped")]
    pub m_treatment: String,
    /// mean_field or sampled positive-phase hidden statistics.
    #[arg(long, default_value = "mean_field")]
    pub hidden_statistics: String,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model file from `train`.
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    pub model: Option<PathBuf>,
    /// user_knn or most_popular instead of a model.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Neighborhood size; defaults to the one the model was trained with.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = erbm::eval::DEFAULT_TOP_N)]
    pub top_n: usize,
    /// Scores above this count as explainable.
    #[arg(long, default_value_t = 0.0)]
    pub theta: f64,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// External user id.
    #[arg(long)]
    pub user: u64,
    #[arg(short, long, default_value_t = erbm::eval::DEFAULT_TOP_N)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// External user id.
    #[arg(long)]
    pub user: u64,
    /// External item id; without it, the model's top-n are explained.
    #[arg(long, required_unless_present = "model")]
    pub item: Option<u64>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(short, long, default_value_t = 3)]
    pub n: usize,
    /// Neighborhood size; defaults to the model's, else 50.
    #[arg(long)]
    pub k: Option<usize>,
    /// `id|title|...` item file (MovieLens u.item) for readable names.
    #[arg(long)]
    pub titles: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Flat key = value config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config entry, e.g. --set runs=1.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Report path; defaults to the config's `output`, else stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Suppress progress lines on stderr.
    #[arg(long)]
    pub quiet: bool,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(a) => commands::ingest(&a, out),
        Command::Train(a) => commands::train(&a, out),
        Command::Evaluate(a) => commands::evaluate(&a, out),
        Command::Recommend(a) => commands::recommend(&a, out),
        Command::Explain(a) => commands::explain(&a, out),
        Command::Sweep(a) => commands::sweep(&a, out),
    }
}

/// Parses `args`, runs the command against stdout and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("erbm: {e}");
            e.exit_code()
        }
    }
}
