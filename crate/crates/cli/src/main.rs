//! `smtgp`: data generation, prediction, cross-validation and divergence
//! tools for twin Gaussian process regression.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Preset;

/// Exit status 1 for runtime failures, 2 for usage errors.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<smtgp::Error> for Failure {
    fn from(e: smtgp::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "smtgp", version, about = "Twin Gaussian process regression under the Sharma-Mittal divergence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a toy training set and its test inputs.
    GenToy {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        which: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Predict every test point and score it.
    Predict(PredictArgs),
    /// Cross-validate alpha and beta for the Sharma-Mittal model.
    Crossval(CrossvalArgs),
    /// Evaluate one divergence between two Gaussians.
    Divergence(DivergenceArgs),
    /// Time the two closed forms of the divergence.
    BenchDivergence {
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long)]
        nonzero_mean: bool,
    },
    /// Pair log certainty with error for a Sharma-Mittal run.
    Certainty(PredictArgs),
    /// Sample the geometric and arithmetic blends of two variances.
    EtaCurves {
        #[arg(long)]
        eta1: f64,
        #[arg(long)]
        eta2: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Kl,
    Ikl,
    Sm,
    SmCubic,
    Gpr,
    Wknn,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Toy1,
    Toy2,
    MeanAbs1d,
    Usps,
    Poser,
    Heva,
}

/// Where run parameters come from.
#[derive(Args, Clone)]
pub struct ConfigArgs {
    /// JSON key-value file; keys override the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Error metric; defaults follow the preset, else mean-abs-1d.
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
}

#[derive(Args, Clone)]
pub struct PredictArgs {
    #[arg(long)]
    train: PathBuf,
    /// Number of input columns in the CSV files.
    #[arg(long)]
    dx: usize,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_enum, default_value = "sm")]
    method: MethodArg,
    #[command(flatten)]
    config: ConfigArgs,
    /// Train each prediction on this many nearest training pairs.
    #[arg(long)]
    ktr: Option<usize>,
    /// Neighbour count for wknn; defaults to round(sqrt(N)).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct CrossvalArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dx: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// `start:step:stop` or a comma list.
    #[arg(long, default_value = "0:0.05:1")]
    alpha_grid: String,
    #[arg(long, default_value = "0.5,0.99,1.5")]
    betas: String,
    #[command(flatten)]
    config: ConfigArgs,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Form {
    Original,
    Simplified,
    Renyi,
    Tsallis,
    Kl,
    Bhatt,
}

#[derive(Args)]
pub struct DivergenceArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    p_cov: PathBuf,
    #[arg(long)]
    q_cov: PathBuf,
    #[arg(long)]
    p_mean: Option<PathBuf>,
    #[arg(long)]
    q_mean: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum, default_value = "simplified")]
    form: Form,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenToy {
            which,
            seed,
            train_out,
            test_out,
        } => commands::gen_toy(which, seed, &train_out, &test_out),
        Command::Predict(args) => commands::predict(&args),
        Command::Crossval(args) => commands::crossval(&args),
        Command::Divergence(args) => commands::divergence(&args),
        Command::BenchDivergence { dim, reps, nonzero_mean } => commands::bench(dim, reps, nonzero_mean),
        Command::Certainty(args) => commands::certainty(&args),
        Command::EtaCurves { eta1, eta2, out } => commands::eta_curves(eta1, eta2, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
