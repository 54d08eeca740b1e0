//! `pufnoise`: ingestion, fitting, simulation and reporting for the SRAM PUF
//! noise model.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

mod commands;
mod error;
mod output;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pufnoise", version, about = "Statistical noise model for SRAM PUFs")]
pub struct Cli {
    /// Master seed of every random stream (default 1; a study config's
    /// own seed is used when this is absent).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Configuration file (TOML), required by `study`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DumpFormat {
    Auto,
    Text,
    Hex,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Raw evaluation dumps to per-device counts CSV.
    Ingest(IngestArgs),
    /// Fit the hierarchy to counts CSV files and write a JSON report.
    Fit(FitArgs),
    /// Simulate devices and their error counts.
    Simulate(SimulateArgs),
    /// Failure probability of a response under a correction capacity.
    Failure(FailureArgs),
    /// Bit-masking report and mean-error-rate curve.
    Mask(MaskArgs),
    /// Expected order statistics of a scaled beta law.
    Orderstat(OrderstatArgs),
    /// Estimator comparison study from `--config`.
    Study,
    /// Variance gap against CDF distance of the binomial approximation.
    ApproxDiag(ApproxDiagArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Dump files, one device each.
    #[arg(required = true)]
    pub dumps: Vec<PathBuf>,
    /// Leading evaluations to discard (aging window).
    #[arg(long, default_value_t = 0)]
    pub skip: usize,
    #[arg(long, value_enum, default_value_t = DumpFormat::Auto)]
    pub format: DumpFormat,
    /// Bins of the bit-weight histogram.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Counts CSV files.
    #[arg(required = true)]
    pub counts: Vec<PathBuf>,
    /// Estimators as cell/device/hyper, e.g. Bayes/Bayes/MLE.
    #[arg(long, default_value = "Bayes/Bayes/MLE")]
    pub methods: String,
    /// Grid points of the posterior-predictive density curve (0 disables).
    #[arg(long, default_value_t = 100)]
    pub density_points: usize,
    /// Bins of the cell-estimate histogram.
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub devices: usize,
    #[arg(long)]
    pub cells: usize,
    /// Evaluations per cell.
    #[arg(long)]
    pub trials: u64,
    /// alpha,beta,kappa,lambda or `measured` / `truth`.
    #[arg(long, default_value = "measured")]
    pub hyper: String,
}

#[derive(Debug, Args)]
pub struct FailureArgs {
    /// Response length.
    #[arg(long)]
    pub n: u64,
    /// Correctable errors.
    #[arg(long)]
    pub capacity: u64,
    /// Mean error rate (number or fraction such as 101.3101/1953).
    #[arg(long, conflicts_with = "hyper")]
    pub p_bar: Option<String>,
    /// Hyperparameters: alpha,beta,kappa,lambda or `measured` / `truth`.
    #[arg(long)]
    pub hyper: Option<String>,
    /// Average this many posterior-predictive draws instead of using E δ.
    #[arg(long, requires = "hyper")]
    pub sample_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// Response length.
    #[arg(long)]
    pub len: usize,
    /// Largest number of ignored cells.
    #[arg(long)]
    pub r_max: usize,
    /// Correction capacity with no cell ignored; omit for the curve only.
    #[arg(long)]
    pub base_capacity: Option<usize>,
    /// Capacity drops by one per this many ignored cells.
    #[arg(long, default_value_t = 2)]
    pub decrement: usize,
    #[arg(long, default_value_t = 100_000)]
    pub replicates: usize,
    /// constant:P, beta:ALPHA,BETA, beta:A,B,ALPHA,BETA, predictive[:HYPER], device[:HYPER].
    #[arg(long)]
    pub sampler: String,
}

#[derive(Debug, Args)]
pub struct OrderstatArgs {
    #[arg(long, value_parser = spec::parse_real)]
    pub alpha: f64,
    #[arg(long, value_parser = spec::parse_real, default_value = "1")]
    pub beta: f64,
    /// Support lower end.
    #[arg(long, value_parser = spec::parse_real, default_value = "0")]
    pub a: f64,
    /// Support upper end.
    #[arg(long, value_parser = spec::parse_real, default_value = "1/2")]
    pub b: f64,
    /// Sample size.
    #[arg(long)]
    pub n: usize,
    /// Single rank; all ranks when omitted.
    #[arg(long)]
    pub k: Option<usize>,
    /// Monte Carlo replicates (required unless alpha or beta equals 1).
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ApproxDiagArgs {
    /// Number of random laws.
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    /// Probabilities per law.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value = "beta:0,1,1.5,1.8")]
    pub sampler: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pufnoise: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

