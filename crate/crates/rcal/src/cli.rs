use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{MethodChoice, QuantileChoice, SplitChoice};

/// Regression calibration for Cox models with an external validation study.
#[derive(Debug, Parser)]
#[command(name = "rcal", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct GlobalArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory, created if missing.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo study of the calibrated estimator over a grid of cells.
    Simulate(SimulateArgs),
    /// Cross-validated comparison of measurement-error model designs.
    Select(SelectArgs),
    /// Calibrated Cox fit on user data with sandwich standard errors.
    Fit(FitArgs),
    /// Markdown tables from the CSV outputs in a results directory.
    Report(ReportArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct SimulateArgs {
    /// Coefficient preset, 1 or 2.
    #[arg(long)]
    pub setting: Option<u8>,

    /// `all`, or a comma-separated list of `p/n1/n2/sigma2v` cells.
    #[arg(long)]
    pub cells: Option<String>,

    /// Replicates per cell.
    #[arg(long)]
    pub replicates: Option<usize>,

    /// Fit measurement-error models without the exposure-confounder interaction.
    #[arg(long)]
    pub no_interactions: bool,

    /// Measurement occasions per validation subject.
    #[arg(long)]
    pub occasions: Option<usize>,

    /// Components kept by the PCA model.
    #[arg(long)]
    pub pca_components: Option<usize>,

    /// Also write the first cell's replicate-0 studies as `main.csv` and `validation.csv`.
    #[arg(long)]
    pub example_data: bool,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SelectArgs {
    /// Validation study CSV to cross-validate on.
    #[arg(long)]
    pub validation: Option<PathBuf>,

    /// Restrict to these designs, e.g. `standard,pca3,pca3:w,rcs4,r270`.
    #[arg(long, value_delimiter = ',')]
    pub specs: Option<Vec<String>>,

    /// Cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,

    /// Assign folds by subject or by row.
    #[arg(long, value_enum)]
    pub split: Option<SplitChoice>,

    /// MAE quantiles over per-fold MAEs or over pooled absolute errors.
    #[arg(long, value_enum)]
    pub quantiles: Option<QuantileChoice>,

    #[arg(long, value_enum)]
    pub method: Option<MethodChoice>,

    /// Run the simulated out-of-sample prediction comparison.
    #[arg(long)]
    pub prediction_study: bool,

    /// Coefficient preset for the prediction study.
    #[arg(long)]
    pub setting: Option<u8>,

    /// Prediction-study runs.
    #[arg(long)]
    pub runs: Option<usize>,

    /// Test-sample size per prediction run.
    #[arg(long)]
    pub n_test: Option<usize>,

    /// Validation subjects per prediction run.
    #[arg(long)]
    pub n2: Option<usize>,

    /// Residual variance of the generating model in the prediction study.
    #[arg(long)]
    pub sigma2_v: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct FitArgs {
    /// Main study CSV.
    #[arg(long)]
    pub main: Option<PathBuf>,

    /// Validation study CSV; the measurement-error model is fitted from it.
    #[arg(long, conflicts_with = "mem")]
    pub validation: Option<PathBuf>,

    /// Previously saved measurement-error model.
    #[arg(long)]
    pub mem: Option<PathBuf>,

    /// Design of the measurement-error model fitted from `--validation`.
    #[arg(long)]
    pub model: Option<String>,

    #[arg(long, value_enum)]
    pub method: Option<MethodChoice>,

    /// Confounder interacting with exposure in the hazard; repeatable.
    #[arg(long = "interaction")]
    pub interactions: Option<Vec<String>>,

    /// Confounder value for the hazard ratio, `name=value`; repeatable.
    /// Unlisted confounders use their main-study mean.
    #[arg(long = "w0")]
    pub w0: Option<Vec<String>>,

    /// Compare the analytic calibration derivative with finite differences.
    #[arg(long)]
    pub check_derivatives: bool,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ReportArgs {
    /// Results directory; defaults to `--out` or the current directory.
    pub dir: Option<PathBuf>,
}
