//! Command-line front end for the two-stage mediation testing library.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::report::Format;

#[derive(Debug, Parser)]
#[command(name = "twostage", version, about = "Two-stage mediation testing experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Multiple-testing study: empirical FWER and power per method.
    Simulate(SimulateArgs),
    /// MSE ratio of the product-filter shrinkage estimator along a sequence.
    MseRatio(MseRatioArgs),
    /// Asymptotic regime of the product-filter shrinkage estimator.
    Classify(ClassifyArgs),
    /// Fit the mediation regressions to a data file.
    Fit(FitArgs),
    /// Filtration probability at the null point and the FWER bound.
    FwerBound(FwerBoundArgs),
}

#[derive(Clone, Debug, Default, Args)]
pub struct CommonArgs {
    /// Master seed; falls back to TWOSTAGE_SEED, then the config, then a fresh seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AdjustmentKind {
    /// alpha / F
    Bonferroni,
    /// alpha * p0 / F
    Aware,
}

#[derive(Clone, Debug, Args)]
pub struct ScenarioArgs {
    /// Built-in scenario: config1, config2, config3 or example54.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, Args)]
pub struct SimulateArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// `all` or a comma-separated list such as `none,minp:0.0004,product:2:0.9`.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long, value_enum)]
    pub adjustment: Option<AdjustmentKind>,
    /// Fixed p0 for the aware adjustment.
    #[arg(long)]
    pub p0: Option<f64>,
    /// Monte-Carlo draws used to estimate p0 when it is not given.
    #[arg(long)]
    pub p0_reps: Option<u64>,
    /// Bar chart of FWER and power.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Clone, Debug, Args)]
pub struct MseRatioArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named sequence and filter, e.g. fig5a-2.
    #[arg(long)]
    pub preset: Option<String>,
    /// gamma sequence, e.g. `2n^-1/2`.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<String>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<u64>>,
    #[arg(long)]
    pub reps: Option<u64>,
    /// Line plot of the ratio against n.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Clone, Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long)]
    pub delta: f64,
    /// Extrapolation grid (default: decades 1e2..1e8).
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<u64>>,
    /// Use this limit of A instead of extrapolating (number, `inf`).
    #[arg(long, requires = "k_limit")]
    pub a_limit: Option<String>,
    /// Use this limit of K instead of extrapolating.
    #[arg(long, requires = "a_limit")]
    pub k_limit: Option<String>,
}

#[derive(Clone, Debug, Args)]
pub struct FitArgs {
    /// Delimited file with columns a, m, y and optional x1..xd.
    pub data: PathBuf,
    /// Field delimiter (default: tab for .tsv files, comma otherwise).
    #[arg(long)]
    pub delimiter: Option<char>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct FwerBoundArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Filtration rule, e.g. `product:2:0.9`.
    #[arg(long)]
    pub rule: Option<String>,
    #[arg(long, value_enum)]
    pub adjustment: Option<AdjustmentKind>,
    #[arg(long)]
    pub p0_reps: Option<u64>,
    #[command(flatten)]
    pub common: CommonArgs,
}
