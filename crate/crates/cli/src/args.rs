use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sardir::optim::ZeroReplacement;
use sardir::simulate::{Generator, ModelKind};

use crate::ingest::{LabelScale, WeightsSpec};

#[derive(Debug, Parser)]
#[command(
    name = "sardir",
    version,
    about = "Dirichlet and multinomial regression for compositional data with a spatial lag"
)]
pub struct Cli {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed; falls back to the config file, then SARDIR_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for folds and replications.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output path (a directory for `simulate`); JSON goes to stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model and report estimates, standard errors and in-sample metrics.
    Fit(FitArgs),
    /// Leave-one-out cross-validation.
    Loocv(FitArgs),
    /// Write one synthetic dataset as CSV files.
    Simulate(StudyArgs),
    /// Monte-Carlo bias / SD / MSE table over replications.
    Replicate(ReplicateArgs),
    /// Fit on one synthetic dataset and score the fits on a fresh test set.
    PredictStudy(ReplicateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Dirichlet,
    Multinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ZMode {
    Intercept,
    CopyX,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ZeroReplace {
    Auto,
    On,
    Off,
}

impl From<ZeroReplace> for ZeroReplacement {
    fn from(z: ZeroReplace) -> Self {
        match z {
            ZeroReplace::Auto => Self::Auto,
            ZeroReplace::On => Self::On,
            ZeroReplace::Off => Self::Off,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorChoice {
    Dirichlet,
    Multinomial,
}

impl From<GeneratorChoice> for Generator {
    fn from(g: GeneratorChoice) -> Self {
        match g {
            GeneratorChoice::Dirichlet => Self::Dirichlet,
            GeneratorChoice::Multinomial => Self::Multinomial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModelName {
    Dirichlet,
    DirichletSpatial,
    Multinomial,
    MultinomialSpatial,
}

impl From<ModelName> for ModelKind {
    fn from(m: ModelName) -> Self {
        match m {
            ModelName::Dirichlet => Self::Dirichlet,
            ModelName::DirichletSpatial => Self::DirichletSpatial,
            ModelName::Multinomial => Self::Multinomial,
            ModelName::MultinomialSpatial => Self::MultinomialSpatial,
        }
    }
}

macro_rules! from_str_via_value_enum {
    ($($t:ty),*) => {$(
        impl FromStr for $t {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                <Self as ValueEnum>::from_str(s, false)
            }
        }
    )*};
}

from_str_via_value_enum!(ZeroReplace, GeneratorChoice, ModelName);

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV of predictors.
    #[arg(long)]
    pub features: PathBuf,
    /// CSV of compositional labels; may be the features file when a manifest is given.
    #[arg(long)]
    pub labels: PathBuf,
    /// Flat `column = role` file (label, feature, precision, trials, ignore).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(LabelScale), default_value = "unit")]
    pub labels_scale: LabelScale,
    /// Divide every label row by its sum before validation.
    #[arg(long)]
    pub close_labels: bool,
    /// Precision design: intercept only, a copy of X, or --z-file.
    #[arg(long, value_enum, default_value = "intercept")]
    pub z: ZMode,
    #[arg(long)]
    pub z_file: Option<PathBuf>,
    /// Do not prepend an intercept column to X (and to a Z file).
    #[arg(long)]
    pub no_intercept: bool,
    /// 2 appends the square of every feature.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub order: u8,
    #[arg(long, value_enum, default_value = "dirichlet")]
    pub model: ModelChoice,
    #[arg(long)]
    pub spatial: bool,
    /// A weights file (dense n x n, or an i,j,w list), knn:K or invdist:CUTOFF.
    #[arg(long, value_parser = clap::value_parser!(WeightsSpec))]
    pub weights: Option<WeightsSpec>,
    /// Two-column coordinates CSV for knn and invdist weights.
    #[arg(long)]
    pub coords: Option<PathBuf>,
    #[arg(long)]
    pub row_normalize: bool,
    #[arg(long, value_enum)]
    pub zero_replace: Option<ZeroReplace>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OptimArgs {
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub gradient_tolerance: Option<f64>,
    #[arg(long)]
    pub objective_tolerance: Option<f64>,
    #[arg(long)]
    pub memory: Option<usize>,
    /// Interior rho values scanned for the starting point of a spatial fit.
    #[arg(long)]
    pub rho_grid: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// True spatial correlation.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorChoice>,
    /// Band half-width of the synthetic weights.
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    /// Row-normalize the synthetic weights (default true).
    #[arg(long)]
    pub row_normalize: Option<bool>,
    #[arg(long)]
    pub trial_min: Option<u64>,
    #[arg(long)]
    pub trial_max: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ReplicateArgs {
    #[command(flatten)]
    pub study: StudyArgs,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated; defaults to the generator's plain and spatial models.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub models: Vec<ModelName>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub optim: OptimArgs,
}
