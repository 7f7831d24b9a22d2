use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "locus", version, about = "Sparse low-rank source separation of connectivity matrices")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known sources.
    Simulate(SimulateArgs),
    /// Fit a decomposition to a dataset.
    Decompose(DecomposeArgs),
    /// Grid search over (phi, rho) scored by BIC.
    Tune(TuneArgs),
    /// Score fits against a truth directory; optionally bootstrap reliability.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Scenario: I (blocks and cross) or II (triangle, circle, square).
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long = "V")]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long = "N")]
    pub subjects: Option<usize>,
    /// Noise standard deviation per edge.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Loading distribution: `split_uniform`, `split_uniform:LOW:HIGH` or `gaussian:SD`.
    #[arg(long)]
    pub loadings: Option<String>,
    /// Flat key=value file supplying defaults for the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Input dataset and solver settings shared by the fitting commands.
#[derive(Debug, Args, Clone)]
pub struct FitArgs {
    /// Number of sources.
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub max_rank: Option<usize>,
    #[arg(long)]
    pub eps1: Option<f64>,
    #[arg(long)]
    pub eps2: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// uniform, vector or nuclear.
    #[arg(long)]
    pub regularizer: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Input layout: `auto`, `edge` (edge CSV) or `square` (directory of V×V CSVs).
    #[arg(long)]
    pub format: Option<String>,
    /// Apply the Fisher z-transform to the inputs.
    #[arg(long)]
    pub fisher_z: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Edge CSV or directory of square CSVs.
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// locus or fastica.
    #[arg(long)]
    pub method: Option<String>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated phi values.
    #[arg(long)]
    pub phi_grid: Option<String>,
    /// Comma-separated rho values.
    #[arg(long)]
    pub rho_grid: Option<String>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Truth directory written by `simulate`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Fit directories to score.
    pub fits: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// pearson or jaccard.
    #[arg(long)]
    pub similarity: Option<String>,
    /// Fraction of strongest edges kept for the Jaccard similarity.
    #[arg(long)]
    pub top_fraction: Option<f64>,
    /// Number of bootstrap replicates; requires --data.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Dataset to resample for the bootstrap.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated methods to bootstrap.
    #[arg(long)]
    pub methods: Option<String>,
    #[command(flatten)]
    pub fit: FitArgs,
}
