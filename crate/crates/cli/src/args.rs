//! Command-line surface: flags, defaults, and their mapping onto library
//! types. Every stochastic subcommand requires an explicit `--seed`; there
//! is deliberately no wall-clock fallback.

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctp_core::selection::{GridKind, PenaltyKind};
use serde::Serialize;
use std::path::PathBuf;

/// Continuous-treatment policy learning from observational data.
#[derive(Debug, Parser)]
#[command(name = "ctp", version, about, max_term_width = 100)]
pub struct Cli {
    /// Rayon worker threads (0 = library default). Reports are
    /// byte-identical across thread counts.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a treatment policy from a CSV sample with data-driven
    /// bandwidth and sieve-dimension selection.
    Fit(FitArgs),
    /// Run a regret experiment against a synthetic DGP catalog entry.
    Simulate(SimulateArgs),
    /// Estimate the smoothing-bias envelope (r, V) and tabulate the
    /// bias bound over the bandwidth grid.
    Biasbound(BiasboundArgs),
    /// Evaluate a fitted policy file on a CSV sample.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyArg {
    Rademacher,
    Holdout,
}

impl From<PenaltyArg> for PenaltyKind {
    fn from(p: PenaltyArg) -> Self {
        match p {
            PenaltyArg::Rademacher => PenaltyKind::Rademacher,
            PenaltyArg::Holdout => PenaltyKind::Holdout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorArg {
    /// Kernel-smoothed inverse-propensity weighting.
    Ipw,
    /// Cross-fitted double-debiased scores.
    Dd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GridArg {
    /// Exponential grid h = rho^-j.
    Exp,
    /// Geometric grid h = j^-rho.
    Geo,
}

impl From<GridArg> for GridKind {
    fn from(g: GridArg) -> Self {
        match g {
            GridArg::Exp => GridKind::Exponential,
            GridArg::Geo => GridKind::Geometric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DgpArg {
    /// m = t, uniform treatment on [0, 1].
    Linear,
    /// Tent outcome centered at 2 on [0, 4].
    Tent,
    /// Smooth quadratic (1 + xbar) t (1 - t) on [0, 1].
    Quad,
    /// Sliding tent with separable monotone optimum on [0, 4].
    Sepmono,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV with header y,t,x1,...,x{dx}.
    #[arg(long)]
    pub data: PathBuf,
    /// Covariate dimension.
    #[arg(long)]
    pub dx: usize,
    /// Master seed (required; controls sign draws, folds, multistarts).
    #[arg(long)]
    pub seed: u64,
    /// Model-selection penalty.
    #[arg(long, value_enum, default_value_t = PenaltyArg::Rademacher)]
    pub penalty: PenaltyArg,
    /// Welfare estimator.
    #[arg(long, value_enum, default_value_t = EstimatorArg::Ipw)]
    pub estimator: EstimatorArg,
    /// Bandwidth grid family.
    #[arg(long, value_enum, default_value_t = GridArg::Exp)]
    pub grid: GridArg,
    /// Grid decay parameter (> 1 for exp, > 0 for geo).
    #[arg(long, default_value_t = 2.0)]
    pub rho: f64,
    /// Largest sieve dimension searched (k = 1..=kmax).
    #[arg(long, default_value_t = 8)]
    pub kmax: usize,
    /// Cross-fitting folds for the double-debiased estimator.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Rademacher sign draws per cell.
    #[arg(long, default_value_t = 100)]
    pub draws: usize,
    /// Bias-penalty inflation factor.
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    /// Holdout testing fraction.
    #[arg(long, default_value_t = 0.2)]
    pub iota: f64,
    /// Report path (JSON, written atomically).
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Catalog data-generating process.
    #[arg(long, value_enum)]
    pub dgp: DgpArg,
    /// Sample sizes, comma separated (e.g. 500,1000,2000).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub n: Vec<usize>,
    /// Replications per sample size.
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Master seed (required).
    #[arg(long)]
    pub seed: u64,
    /// Outcome noise standard deviation.
    #[arg(long, default_value_t = 0.5)]
    pub noise_sd: f64,
    /// Covariate dimension of the DGP.
    #[arg(long, default_value_t = 1)]
    pub dx: usize,
    /// Model-selection penalty.
    #[arg(long, value_enum, default_value_t = PenaltyArg::Rademacher)]
    pub penalty: PenaltyArg,
    /// Welfare estimator (ipw uses the known propensity oracle).
    #[arg(long, value_enum, default_value_t = EstimatorArg::Ipw)]
    pub estimator: EstimatorArg,
    /// Bandwidth grid family.
    #[arg(long, value_enum, default_value_t = GridArg::Exp)]
    pub grid: GridArg,
    /// Grid decay parameter.
    #[arg(long, default_value_t = 2.0)]
    pub rho: f64,
    /// Largest sieve dimension searched.
    #[arg(long, default_value_t = 8)]
    pub kmax: usize,
    /// Cross-fitting folds for the double-debiased estimator.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Rademacher sign draws per cell.
    #[arg(long, default_value_t = 100)]
    pub draws: usize,
    /// Holdout testing fraction.
    #[arg(long, default_value_t = 0.2)]
    pub iota: f64,
    /// Estimate the bias envelope from each sample instead of using the
    /// DGP's analytic (r, V).
    #[arg(long, default_value_t = false)]
    pub estimate_bias: bool,
    /// Per-replication records (CSV, written atomically).
    #[arg(long, default_value = "regret.csv")]
    pub out: PathBuf,
    /// Summary report path (JSON, written atomically).
    #[arg(long, default_value = "simulate_report.json")]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct BiasboundArgs {
    /// Input CSV with header y,t,x1,...,x{dx}.
    #[arg(long)]
    pub data: PathBuf,
    /// Covariate dimension.
    #[arg(long)]
    pub dx: usize,
    /// Master seed (required; controls the cross-fit split).
    #[arg(long)]
    pub seed: u64,
    /// Bandwidth grid family.
    #[arg(long, value_enum, default_value_t = GridArg::Exp)]
    pub grid: GridArg,
    /// Grid decay parameter.
    #[arg(long, default_value_t = 2.0)]
    pub rho: f64,
    /// Bias-penalty inflation factor.
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    /// Report path (JSON, written atomically).
    #[arg(long, default_value = "bias.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Fitted policy file (JSON).
    #[arg(long)]
    pub policy: PathBuf,
    /// Input CSV with header y,t,x1,...,x{dx} on the policy's raw scale.
    #[arg(long)]
    pub data: PathBuf,
    /// Report path (JSON, written atomically).
    #[arg(long, default_value = "evaluate.json")]
    pub out: PathBuf,
}
