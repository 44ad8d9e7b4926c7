use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ngk::bench::DesignKind;
use ngk::KernelKind;

fn parse_kernel(s: &str) -> Result<KernelKind, String> {
    s.parse().map_err(|e: ngk::NgkError| e.to_string())
}

fn parse_design(s: &str) -> Result<DesignKind, String> {
    s.parse().map_err(|e: ngk::NgkError| e.to_string())
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "\\t" | "tab" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(format!("delimiter must be a single ASCII character, got `{s}`")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub high: f64,
    pub low: f64,
    pub count: usize,
}

fn parse_grid(s: &str) -> Result<GridSpec, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [hi, lo, count] = parts.as_slice() else {
        return Err(format!("expected `high,low,count`, got `{s}`"));
    };
    let high: f64 = hi.parse().map_err(|_| format!("bad grid bound `{hi}`"))?;
    let low: f64 = lo.parse().map_err(|_| format!("bad grid bound `{lo}`"))?;
    let count: usize = count.parse().map_err(|_| format!("bad grid count `{count}`"))?;
    if !(high > 0.0 && low > 0.0 && high > low && count >= 1) {
        return Err(format!("grid `{s}` needs high > low > 0 and count >= 1"));
    }
    Ok(GridSpec { high, low, count })
}

/// Nonnegative garrote on kernel: sparse variable selection for
/// nonparametric regression.
#[derive(Debug, Parser)]
#[command(name = "ngk", version, about)]
pub struct Cli {
    /// Plain-text `key=value` file supplying defaults for any long flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory receiving all outputs and the manifest.
    #[arg(long, global = true, env = "NGK_OUT_DIR", default_value = "ngk-out")]
    pub out_dir: PathBuf,

    /// Field delimiter for input and output files (`tab` for tabs).
    #[arg(long, global = true, default_value = ",", value_parser = parse_delimiter)]
    pub delimiter: u8,

    /// Worker threads for replicates and runs; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the smoothing parameter and fit the kernel machine.
    Fit(FitArgs),
    /// Trace the solution path.
    Path(ModelCommand),
    /// Trace the path and choose a model.
    Select(ModelCommand),
    /// Selection frequencies from the m-out-of-n bootstrap.
    Bootstrap(ResampleArgs),
    /// Selection frequencies from residual permutation.
    Permute(ResampleArgs),
    /// Rank predictors by marginal screening.
    Screen(ScreenArgs),
    /// Replicated simulation study.
    Simulate(SimulateArgs),
    /// Incoherence, KKT and bound diagnostics.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Delimited input file with a header row.
    #[arg(long)]
    pub input: PathBuf,

    /// Response column, by name or zero-based index.
    #[arg(long, default_value = "y")]
    pub response: String,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// gaussian, or linear (aliases: poly, linear-polynomial).
    #[arg(long, default_value = "gaussian", value_parser = parse_kernel)]
    pub kernel: KernelKind,

    /// Uniform scale for the smoothing-parameter estimate (default 1/p).
    #[arg(long)]
    pub rho: Option<f64>,

    #[arg(long, default_value_t = 50)]
    pub grid_size: usize,

    #[arg(long, default_value_t = 1e-3)]
    pub lambda_min_ratio: f64,

    /// Explicit decreasing penalty grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,

    #[arg(long, default_value_t = 500)]
    pub max_sweeps: usize,

    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,

    /// Refit the kernel-machine coefficients after each grid point.
    #[arg(long)]
    pub refit_alpha: bool,

    /// Select the first W predictors to enter instead of the BIC minimizer.
    #[arg(long)]
    pub window: Option<usize>,

    /// Keep only this many predictors after marginal screening.
    #[arg(long)]
    pub screen: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value = "gaussian", value_parser = parse_kernel)]
    pub kernel: KernelKind,

    #[arg(long)]
    pub rho: Option<f64>,

    /// Use this smoothing parameter instead of estimating it.
    #[arg(long)]
    pub lambda0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelCommand {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct ResampleArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(long, default_value_t = 100)]
    pub replicates: usize,

    /// Bootstrap subsample size (default n/2).
    #[arg(long)]
    pub m: Option<usize>,

    /// Selection-probability cutoff for the chosen set.
    #[arg(long, default_value_t = 0.6)]
    pub threshold: f64,

    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Number of predictors to keep.
    #[arg(long, visible_alias = "keep")]
    pub screen: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// example-1, example-2, example-3, zhao-yu or sca-synthetic.
    #[arg(long, value_parser = parse_design)]
    pub design: DesignKind,

    #[arg(long, default_value_t = 64)]
    pub n: usize,

    /// Predictor count (design default when unset).
    #[arg(long)]
    pub p: Option<usize>,

    #[arg(long, default_value_t = 50)]
    pub runs: usize,

    /// Comma-separated kernels; one summary row each.
    #[arg(long, value_delimiter = ',', default_value = "gaussian", value_parser = parse_kernel)]
    pub kernels: Vec<KernelKind>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[command(flatten)]
    pub path: PathArgs,
}

/// Path settings without the kernel choice (simulate sweeps kernels itself).
#[derive(Debug, Args)]
pub struct PathArgs {
    #[arg(long)]
    pub rho: Option<f64>,

    #[arg(long, default_value_t = 50)]
    pub grid_size: usize,

    #[arg(long, default_value_t = 1e-3)]
    pub lambda_min_ratio: f64,

    #[arg(long, default_value_t = 500)]
    pub max_sweeps: usize,

    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,

    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Simulate the data from this design instead of reading a file.
    #[arg(long, value_parser = parse_design, conflicts_with = "input")]
    pub design: Option<DesignKind>,

    #[arg(long)]
    pub input: Option<PathBuf>,

    #[arg(long, default_value = "y")]
    pub response: String,

    #[arg(long, default_value_t = 200)]
    pub n: usize,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long, default_value = "linear", value_parser = parse_kernel)]
    pub kernel: KernelKind,

    /// Active predictors, zero-based, comma separated (design truth by default).
    #[arg(long, value_delimiter = ',')]
    pub active: Option<Vec<usize>>,

    /// Uniform reference scale for `alpha = (lambda0 I + K(xi))^{-1} y`.
    #[arg(long, default_value_t = 1.0)]
    pub xi_ref: f64,

    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,

    /// Smoothing parameter (estimated by marginal likelihood when unset).
    #[arg(long)]
    pub lambda0: Option<f64>,

    /// Noise standard deviation used in the sparsistency bound.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,

    /// Sweep the penalty over `--lambda-range`.
    #[arg(long)]
    pub sweep_lambda: bool,

    /// Sweep the smoothing parameter over `--lambda0-range`.
    #[arg(long)]
    pub sweep_lambda0: bool,

    /// `high,low,count` of the geometric penalty grid.
    #[arg(long, default_value = "10,1e-5,31", value_parser = parse_grid)]
    pub lambda_range: GridSpec,

    /// `high,low,count` of the geometric smoothing-parameter grid.
    #[arg(long, default_value = "10,1e-4,21", value_parser = parse_grid)]
    pub lambda0_range: GridSpec,
}
