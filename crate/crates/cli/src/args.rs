use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "regbayes", version, about = "Infinite latent SVMs for multi-way and multi-task classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write it with its objective trace.
    Fit(FitArgs),
    /// Predict labels for a data file with a fitted model.
    Predict(PredictArgs),
    /// Score a fitted model on labelled data and write a JSON report.
    Eval(EvalArgs),
    /// Generate a synthetic dataset with its ground truth.
    Synth(SynthArgs),
    /// Choose alpha and C by k-fold cross-validation on the training rows.
    Cv(FitArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Single-task multi-way model; data in LIBSVM format.
    Ilsvm,
    /// Multi-task binary model; data as CSV with `label:` columns.
    MtIlsvm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Full,
    Decoupled,
}

/// Options shared by `fit` and `cv`. Every option may also come from the
/// `--config` JSON file (same names, snake_case); flags win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitArgs {
    /// JSON file with any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Training data file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Training fraction for a random split, or a JSON split file.
    #[arg(long)]
    pub split: Option<String>,
    /// IBP concentration (default 1).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Margin constant C (default 1).
    #[arg(long)]
    pub c: Option<f64>,
    /// Truncation level K (default 50).
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Re-estimate the variance hyperparameters every outer iteration.
    #[arg(long)]
    pub estimate_hypers: bool,
    #[arg(long)]
    pub inner_tol: Option<f64>,
    #[arg(long)]
    pub inner_iters: Option<usize>,
    #[arg(long)]
    pub outer_tol: Option<f64>,
    #[arg(long)]
    pub outer_iters: Option<usize>,
    /// Initialise loadings from the leading singular vectors.
    #[arg(long)]
    pub svd_init: bool,
    /// Standardise features with training-row statistics.
    #[arg(long)]
    pub standardize: bool,
    /// Spread per-row and per-task work over threads (REGBAYES_THREADS caps them).
    #[arg(long)]
    pub parallel: bool,
    /// Folds; with `fit`, choose alpha and C by cross-validation first.
    #[arg(long)]
    pub cv: Option<usize>,
    /// Output path: the model for `fit`, the report for `cv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trace CSV path (default: next to the model, `.trace.csv`).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

impl FitArgs {
    /// Fills options missing from the command line with those in `file`.
    pub fn merged_with(self, file: FitArgs) -> FitArgs {
        FitArgs {
            config: self.config,
            model: self.model.or(file.model),
            mode: self.mode.or(file.mode),
            data: self.data.or(file.data),
            split: self.split.or(file.split),
            alpha: self.alpha.or(file.alpha),
            c: self.c.or(file.c),
            truncation: self.truncation.or(file.truncation),
            seed: self.seed.or(file.seed),
            estimate_hypers: self.estimate_hypers || file.estimate_hypers,
            inner_tol: self.inner_tol.or(file.inner_tol),
            inner_iters: self.inner_iters.or(file.inner_iters),
            outer_tol: self.outer_tol.or(file.outer_tol),
            outer_iters: self.outer_iters.or(file.outer_iters),
            svd_init: self.svd_init || file.svd_init,
            standardize: self.standardize || file.standardize,
            parallel: self.parallel || file.parallel,
            cv: self.cv.or(file.cv),
            out: self.out.or(file.out),
            trace: self.trace.or(file.trace),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Fitted model JSON.
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Standardise with statistics of these rows' split (see `--split`).
    #[arg(long)]
    pub standardize: bool,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV output (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Fitted model JSON.
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Training fraction or JSON split file; test rows are scored.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub standardize: bool,
    /// Report JSON output (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "ilsvm")]
    pub model: ModelKind,
    /// Output prefix: writes `<out>.svm` or `<out>.csv`, `<out>.truth.json`
    /// and, with `--split`, `<out>.split.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Rows (per task unless `--shared-inputs`).
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub d: usize,
    #[arg(long, default_value_t = 5)]
    pub k_true: usize,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 3)]
    pub labels: usize,
    #[arg(long, default_value_t = 5)]
    pub tasks: usize,
    #[arg(long)]
    pub shared_inputs: bool,
    /// Training fraction of a random split to write alongside.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
