//! `bogcn`: generate synthetic benchmarks, train and evaluate predictors,
//! and run architecture searches against tabular datasets.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use bogcn::surrogate::LossKind;
use bogcn::Error;
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "bogcn", version, about = "GCN + Bayesian-optimization architecture search")]
struct Cli {
    /// Worker threads for pool scoring and embedding.
    #[arg(long, global = true, env = "BOGCN_THREADS")]
    threads: Option<usize>,

    /// Repeat for more log output (warn, info, debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic tabular benchmark.
    GenBench(GenBenchArgs),
    /// Train a predictor on a dataset and save its checkpoint.
    TrainPredictor(PredictorArgs),
    /// Train on a seeded split and report test-set correlations.
    EvalPredictor(EvalArgs),
    /// Search a tabular dataset with BOGCN or a baseline.
    Search(SearchArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file with [bench], [predictor], [search] and [evolution] sections.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,

    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,

    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct GenBenchArgs {
    #[command(flatten)]
    common: Common,

    /// Number of distinct architectures.
    #[arg(long)]
    size: Option<usize>,

    #[arg(long)]
    min_nodes: Option<usize>,

    #[arg(long)]
    max_nodes: Option<usize>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// JSON-lines dataset.
    #[arg(long)]
    data: PathBuf,

    /// Vocabulary file; defaults to vocab.json beside the dataset, else
    /// operations in order of appearance.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LossArg {
    Mse,
    ExpWeighted,
    LogWeighted,
    LinearWeighted,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Mse => LossKind::Mse,
            LossArg::ExpWeighted => LossKind::ExpWeighted,
            LossArg::LogWeighted => LossKind::LogWeighted,
            LossArg::LinearWeighted => LossKind::LinearWeighted,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Gcn,
    Mlp,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,

    #[arg(long)]
    patience: Option<usize>,

    #[arg(long)]
    batch_size: Option<usize>,

    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Debug, Args)]
struct PredictorArgs {
    #[command(flatten)]
    common: Common,

    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    train: TrainArgs,

    /// Metric to regress.
    #[arg(long)]
    objective: Option<String>,

    #[arg(long, value_enum)]
    loss: Option<LossArg>,

    #[arg(long, value_enum)]
    model: Option<ModelArg>,

    #[arg(long)]
    hidden: Option<usize>,

    #[arg(long)]
    layers: Option<usize>,

    #[arg(long)]
    train_n: Option<usize>,

    #[arg(long)]
    val_n: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    predictor: PredictorArgs,

    #[arg(long)]
    test_n: Option<usize>,

    /// Score the training records themselves (overfitting check).
    #[arg(long)]
    test_on_train: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Bogcn,
    Random,
    Evolution,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[command(flatten)]
    common: Common,

    #[command(flatten)]
    data: DataArgs,

    /// Comma-separated `name:max|min[:exact]`.
    #[arg(long, default_value = "accuracy:max")]
    objectives: String,

    #[arg(long, value_enum, default_value = "bogcn")]
    baseline: Baseline,

    #[arg(long)]
    init_samples: Option<usize>,

    /// Candidates scored per iteration; 0 scores the whole space.
    #[arg(long)]
    pool_size: Option<usize>,

    #[arg(long)]
    batch_l: Option<usize>,

    #[arg(long)]
    retrain_k: Option<usize>,

    /// Maximum oracle calls, initial samples included.
    #[arg(long)]
    budget: Option<usize>,

    /// Share of the true Pareto front that ends the run.
    #[arg(long)]
    threshold: Option<f64>,

    #[arg(long, value_enum)]
    loss: Option<LossArg>,

    #[arg(long, value_enum)]
    surrogate: Option<ModelArg>,

    #[arg(long)]
    point_estimate_only: bool,

    #[arg(long)]
    population: Option<usize>,

    #[arg(long)]
    sample_size: Option<usize>,

    /// Save the search state here after every iteration and resume from it.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

/// Why a command did not complete.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or inputs.
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_)
            | Error::Validation { .. }
            | Error::Parse { .. }
            | Error::InvalidGraph(_)
            | Error::LabelOutOfVocabulary { .. }
            | Error::UnknownOperation(_)
            | Error::InvalidVocabulary(_)
            | Error::InsufficientData(_) => Failure::Usage(e.to_string()),
            e => Failure::Core(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }

    let outcome = match cli.command {
        Command::GenBench(a) => commands::gen_bench(a),
        Command::TrainPredictor(a) => commands::train_predictor(a),
        Command::EvalPredictor(a) => commands::eval_predictor(a),
        Command::Search(a) => commands::search(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
