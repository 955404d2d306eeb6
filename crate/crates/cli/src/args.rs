use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use massimp::simulation::PopulationModel;
use massimp::ModelFamily;

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "massimp",
    version,
    about = "Mass imputation estimates from a probability and a non-probability sample"
)]
pub struct Cli {
    /// TOML file whose keys are long flag names of the chosen subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for replicate and Monte Carlo loops.
    #[arg(long, global = true, env = "MASSIMP_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the mean model on sample B.
    #[command(args_override_self = true)]
    Fit(FitArgs),
    /// Impute the study variable for every unit of sample A.
    #[command(args_override_self = true)]
    Impute(ImputeArgs),
    /// Point estimate and variance from an imputed or augmented file.
    #[command(args_override_self = true)]
    Estimate(EstimateArgs),
    /// Write sample A with replicate weights and replicate imputations.
    #[command(args_override_self = true)]
    Bootstrap(BootstrapArgs),
    /// Monte Carlo study on a synthetic population.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelSpecArgs {
    /// Study variable column in sample B.
    #[arg(long)]
    pub response: Option<String>,
    /// Comma-separated numeric covariate columns.
    #[arg(long, value_name = "COLS")]
    pub covariates: Option<String>,
    /// Comma-separated categorical covariates as `name:reference`.
    #[arg(long, value_name = "SPECS")]
    pub categorical: Option<String>,
    #[arg(long, default_value = "linear", value_parser = parse_family)]
    pub family: ModelFamily,
    /// Fit without an intercept column.
    #[arg(long)]
    pub no_intercept: bool,
}

fn parse_family(s: &str) -> Result<ModelFamily, String> {
    s.parse::<ModelFamily>().map_err(|e| e.to_string())
}

fn parse_population_model(s: &str) -> Result<PopulationModel, String> {
    s.parse::<PopulationModel>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Sample B (CSV).
    #[arg(long)]
    pub train: PathBuf,
    #[command(flatten)]
    pub spec: ModelSpecArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    /// Model file written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Sample A (CSV).
    #[arg(long)]
    pub sample_a: PathBuf,
    /// Design weight column of sample A.
    #[arg(long, default_value = "w")]
    pub weight: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VarianceChoice {
    None,
    Linearized,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignChoice {
    Srs,
    Ppswr,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyChoice {
    Exact,
    Ppswr,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// File written by `impute` or `bootstrap`.
    #[arg(long)]
    pub imputed: PathBuf,
    /// Population size, or `estimate` to use the weight total.
    #[arg(long, default_value = "estimate")]
    pub pop_size: String,
    #[arg(long, value_enum, default_value = "none")]
    pub variance: VarianceChoice,
    /// Sample B; needed for linearized variance.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Sampling design of A, used by linearized variance.
    #[arg(long, value_enum, default_value = "srs")]
    pub design: DesignChoice,
    /// Headerless `n_A x n_A` CSV of joint inclusion probabilities.
    #[arg(long)]
    pub joint_probs: Option<PathBuf>,
    /// Design-variance formula for A; defaults by design.
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyChoice>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    /// Sample B (CSV).
    #[arg(long)]
    pub train: PathBuf,
    /// Sample A (CSV).
    #[arg(long)]
    pub sample_a: PathBuf,
    /// Model file from `fit`; replaces the model flags below.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub spec: ModelSpecArgs,
    #[arg(long, default_value = "w")]
    pub weight: String,
    /// Number of bootstrap replicates.
    #[arg(long = "L", visible_alias = "replicates", default_value_t = 500)]
    pub replicates: usize,
    #[arg(long, env = "MASSIMP_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Design of A for the replicate weights.
    #[arg(long, value_enum, default_value = "srs")]
    pub design: DesignChoice,
    /// Population size recorded in the manifest; `estimate` leaves it out.
    #[arg(long, default_value = "estimate")]
    pub pop_size: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_population_model)]
    pub model: PopulationModel,
    #[arg(long, default_value_t = 100_000)]
    pub pop_size: usize,
    #[arg(long, default_value_t = 500)]
    pub n_a: usize,
    #[arg(long, default_value_t = 500)]
    pub n_b: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Bootstrap replicates per rep; 0 skips the bootstrap.
    #[arg(long, default_value_t = 500)]
    pub boot_l: usize,
    #[arg(long, env = "MASSIMP_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-rep estimates as CSV.
    #[arg(long)]
    pub reps_csv: Option<PathBuf>,
}
