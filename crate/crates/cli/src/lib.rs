//! `ccpo` command-line front end. [`run`] is the whole program; `main` only
//! forwards the process arguments and exit code.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use ccpo_core::Error;

#[derive(Debug, Parser)]
#[command(name = "ccpo", version, about = "Cardinality-constrained portfolio selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic returns panel and its sector map.
    Synth(SynthArgs),
    /// Estimate mean returns and covariance from the configured data.
    Estimate(ConfigArgs),
    /// Solve one problem and write weights.csv and report.json.
    Solve(ConfigArgs),
    /// Sweep the return weight (mean-variance) or confidence level (CVaR).
    Frontier(FrontierArgs),
    /// Enumerate every support of a single-group problem.
    Oracle(OracleArgs),
    /// Measure how often the solver leaves a restricted optimum.
    Escape(EscapeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = ccpo_core::experiments::DEFAULT_N_ASSETS)]
    pub n_assets: usize,
    #[arg(long, default_value_t = ccpo_core::experiments::DEFAULT_N_SAMPLES)]
    pub n_samples: usize,
    #[arg(long, default_value_t = ccpo_core::experiments::DEFAULT_N_SECTORS)]
    pub sectors: usize,
    #[arg(long, default_value_t = ccpo_core::experiments::DEFAULT_SEED)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "ccpo-out")]
    pub out: PathBuf,
}

/// A config file plus overrides for its solver block.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub accelerate: Option<bool>,
    /// Comma-separated penalty weights.
    #[arg(long, value_delimiter = ',')]
    pub nu_schedule: Option<Vec<f64>>,
    /// Fixed step for the weight block; `lipschitz` for 1/(L + ν).
    #[arg(long)]
    pub step: Option<String>,
    /// Output directory, replacing the config's.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantSet {
    /// Only the configured partition.
    Config,
    /// Unconstrained plus the two sector-exclusion variants.
    Default,
}

#[derive(Debug, Args)]
pub struct FrontierArgs {
    #[command(flatten)]
    pub base: ConfigArgs,
    /// Comma-separated parameter grid; defaults depend on the model.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = VariantSet::Config)]
    pub variants: VariantSet,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub base: ConfigArgs,
    /// Largest number of subsets to enumerate.
    #[arg(long, default_value_t = ccpo_core::oracle::DEFAULT_CAP)]
    pub cap: u128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Markowitz,
    Cvar,
}

#[derive(Debug, Args)]
pub struct EscapeArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Universe sizes (first n assets), comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    /// Cardinalities, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = ccpo_core::experiments::DEFAULT_SEED)]
    pub seed: u64,
    /// Return weight for the mean-variance model.
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    /// Confidence level for the CVaR model.
    #[arg(long, default_value_t = 0.9)]
    pub beta: f64,
    /// Take the universe from a config file instead of the default panel.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write escape.csv here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse `argv` (program name first), execute, and return the exit code:
/// 0 on success, 1 for bad input, 2 when a run fails.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            report_error(&e);
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn report_error(e: &Error) {
    match e {
        Error::Validation(list) => {
            eprintln!("error: {} problem(s) found", list.len());
            for item in list {
                eprintln!("  - {item}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}
