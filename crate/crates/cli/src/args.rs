use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ultra_core::Pattern;

#[derive(Debug, Parser)]
#[command(name = "ultra", version, about = "Hyperspectral unmixing with a low-rank tensor prior")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene with known ground truth.
    Simulate(SimulateArgs),
    /// Estimate abundances from a cube and an endmember matrix.
    Unmix(UnmixArgs),
    /// Score an abundance estimate.
    Eval(EvalArgs),
    /// Sweep the prior weight and rank and score every run.
    Gridsearch(GridArgs),
    /// Paired one-tailed Wilcoxon signed-rank test on two SRE lists.
    Wilcoxon(WilcoxonArgs),
    /// Write one PNG per abundance map.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PatternArg {
    GaussFields,
    Blocks,
    Bumps,
}

impl From<PatternArg> for Pattern {
    fn from(p: PatternArg) -> Self {
        match p {
            PatternArg::GaussFields => Pattern::GaussFields,
            PatternArg::Blocks => Pattern::Blocks,
            PatternArg::Bumps => Pattern::Bumps,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub cols: usize,
    #[arg(long)]
    pub bands: usize,
    #[arg(long = "endmembers-count")]
    pub endmembers_count: usize,
    #[arg(long, value_enum, default_value = "gauss-fields")]
    pub pattern: PatternArg,
    /// Spatial correlation length in pixels.
    #[arg(long, default_value_t = 3.0)]
    pub smoothness: f64,
    /// Target maximum pairwise cosine similarity of the endmembers.
    #[arg(long, default_value_t = 0.9)]
    pub coherence: f64,
    /// Global SNR in dB. Omit for a noiseless cube.
    #[arg(long = "snr-db")]
    pub snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "out-cube")]
    pub out_cube: PathBuf,
    #[arg(long = "out-truth")]
    pub out_truth: PathBuf,
    #[arg(long = "out-endmembers")]
    pub out_endmembers: PathBuf,
    /// Scene description and realized SNR. Defaults to the cube path with `.json` appended.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Fcls,
    Ultra,
}

#[derive(Debug, Args)]
pub struct UnmixInputs {
    #[arg(long)]
    pub cube: PathBuf,
    #[arg(long)]
    pub endmembers: PathBuf,
    /// Outer iteration cap for ULTRA.
    #[arg(long = "max-outer", default_value_t = 50)]
    pub max_outer: usize,
    /// Relative change of the objective that stops ULTRA.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct UnmixArgs {
    #[command(flatten)]
    pub inputs: UnmixInputs,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Prior weight; required for `ultra`.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Prior rank; required for `ultra`.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Seed of the CPD initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output abundance cube.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON run report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Sre,
    Rmse,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Estimated abundance cube.
    #[arg(long)]
    pub est: PathBuf,
    #[arg(long, value_enum, default_value = "sre")]
    pub metric: Metric,
    /// Ground-truth abundances (for `sre`).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Observed cube (for `rmse`).
    #[arg(long)]
    pub cube: Option<PathBuf>,
    /// Endmember CSV (for `rmse`).
    #[arg(long)]
    pub endmembers: Option<PathBuf>,
    /// Append `run_id,metric,value` to this CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Run identifier for the CSV row. Defaults to the estimate's file name.
    #[arg(long = "run-id")]
    pub run_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub inputs: UnmixInputs,
    /// Ground-truth abundances.
    #[arg(long)]
    pub truth: PathBuf,
    /// Comma-separated prior weights.
    #[arg(long = "lambda-grid", value_delimiter = ',', num_args = 1..)]
    pub lambda_grid: Vec<f64>,
    /// Comma-separated prior ranks.
    #[arg(long = "rank-grid", value_delimiter = ',', num_args = 1..)]
    pub rank_grid: Vec<usize>,
    /// Seeds per cell, starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    pub runs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV with one row per run.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct WilcoxonArgs {
    /// Baseline SRE values, one per row.
    #[arg(long)]
    pub a: PathBuf,
    /// Candidate SRE values, paired with `--a` by row.
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub abundances: PathBuf,
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
}
