//! Command-line surface. Flags map one-to-one onto the library's
//! configuration fields; a flat key=value config file can supply any
//! training option, with explicit flags taking precedence.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "msrl",
    about = "Adversarial mutual-information sufficient representation learning",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Suppress the timestamp comment line in CSV outputs (byte-stable
    /// outputs for fixed seeds).
    #[arg(long, global = true)]
    pub no_timestamp: bool,

    /// Worker threads for parallel sections (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and write it as CSV.
    Simulate(SimulateOpts),
    /// Train the representer and critics; write model, log, metrics.
    Train(TrainOpts),
    /// Evaluate a trained model on a dataset (metrics + plots).
    Eval(EvalOpts),
    /// Print the plug-in mutual-information estimate of a trained model.
    MiEstimate(MiEstimateOpts),
    /// Select the intrinsic dimension by dichotomy cross-validation.
    DimSelect(DimSelectOpts),
    /// Run the simulation-table comparison (method x cell grid).
    ReproduceTable1(Table1Opts),
    /// Run the dimension-selection proportion table over seeds.
    ReproduceTable3(Table3Opts),
}

#[derive(Debug, Args, Clone)]
pub struct DataSource {
    /// CSV dataset path (header row, numeric cells).
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Response column names in the CSV (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "y0")]
    pub response_cols: Vec<String>,

    /// Drop constant predictor columns on load.
    #[arg(long)]
    pub drop_constant: bool,

    /// Z-score the predictors after loading.
    #[arg(long)]
    pub standardize: bool,

    /// Simulation link (I..IV) for inline generation.
    #[arg(long)]
    pub model: Option<String>,

    /// Predictor law (i..iv) for inline generation.
    #[arg(long)]
    pub scenario: Option<String>,

    /// Generate the sign-log toy instead of a model/scenario pair.
    #[arg(long)]
    pub toy: bool,

    /// Generate the heteroscedastic dimension toy.
    #[arg(long)]
    pub dim_toy: bool,

    /// Rows for inline generation.
    #[arg(long, default_value_t = 6000)]
    pub n: usize,

    /// Predictor dimension for inline generation.
    #[arg(long, default_value_t = 10)]
    pub p: usize,
}

#[derive(Debug, Args)]
pub struct SimulateOpts {
    #[command(flatten)]
    pub source: DataSource,

    /// Noise standard deviation override (0 disables noise).
    #[arg(long)]
    pub noise_sd: Option<f64>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TrainTuning {
    /// Flat key=value config file; flags override file entries.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Named preset: paper | desk.
    #[arg(long)]
    pub preset: Option<String>,

    #[arg(long)]
    pub lambda: Option<f64>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub lr: Option<f64>,

    #[arg(long)]
    pub weight_decay: Option<f64>,

    #[arg(long)]
    pub max_epochs: Option<usize>,

    #[arg(long)]
    pub patience: Option<usize>,

    #[arg(long)]
    pub restarts: Option<usize>,

    /// uniform01 | sin-gaussian
    #[arg(long)]
    pub reference: Option<String>,

    /// auto | exact | permuted
    #[arg(long)]
    pub loss_mode: Option<String>,

    /// dc | dcov
    #[arg(long)]
    pub es_metric: Option<String>,

    /// Representer hidden widths, comma separated (e.g. 32,16,8).
    #[arg(long)]
    pub r_hidden: Option<String>,

    /// Critic hidden widths, comma separated (e.g. 16,8).
    #[arg(long)]
    pub dq_hidden: Option<String>,

    /// Clamp the representer output into [0,1] through the two-ReLU
    /// truncation.
    #[arg(long)]
    pub truncate_output: bool,

    /// Use L2-in-gradient weight decay instead of decoupled decay.
    #[arg(long)]
    pub coupled_weight_decay: bool,
}

#[derive(Debug, Args)]
pub struct TrainOpts {
    #[command(flatten)]
    pub source: DataSource,

    /// Representation dimension (required unless --dim-select).
    #[arg(long)]
    pub d0: Option<usize>,

    /// Select d0 by dichotomy cross-validation before training.
    #[arg(long)]
    pub dim_select: bool,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Train/val/test counts, comma separated; default splits by the
    /// 2/3, 1/6, 1/6 fractions.
    #[arg(long)]
    pub split_counts: Option<String>,

    #[command(flatten)]
    pub tuning: TrainTuning,

    /// Output directory (model.bin, train_log.csv, metrics.csv).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalOpts {
    #[command(flatten)]
    pub source: DataSource,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Model file written by `train`.
    #[arg(long)]
    pub model_file: PathBuf,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MiEstimateOpts {
    #[command(flatten)]
    pub source: DataSource,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub model_file: PathBuf,
}

#[derive(Debug, Args)]
pub struct DimSelectOpts {
    #[command(flatten)]
    pub source: DataSource,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Upper bound for the search (defaults to the predictor dimension).
    #[arg(long)]
    pub d_upper: Option<usize>,

    #[arg(long, default_value_t = 0.2)]
    pub eta: f64,

    #[arg(long, default_value_t = 5)]
    pub folds: usize,

    /// Batch mode: repeat over this many seeds and report proportions.
    #[arg(long)]
    pub seeds: Option<usize>,

    #[command(flatten)]
    pub tuning: TrainTuning,

    /// Optional output directory for the trace / proportion table.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Table1Opts {
    /// Cells as model:scenario pairs, e.g. I:i,IV:ii.
    #[arg(long, value_delimiter = ',', default_value = "I:i")]
    pub cells: Vec<String>,

    /// Evaluation folds to run (out of 6 blocks).
    #[arg(long, default_value_t = 2)]
    pub folds: usize,

    #[arg(long, default_value_t = 10)]
    pub p: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub tuning: TrainTuning,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Table3Opts {
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,

    #[arg(long, default_value_t = 0.2)]
    pub eta: f64,

    /// Rows per generated dataset.
    #[arg(long, default_value_t = 2500)]
    pub n: usize,

    #[arg(long, default_value_t = 5)]
    pub folds: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub tuning: TrainTuning,

    #[arg(long)]
    pub out: PathBuf,
}
