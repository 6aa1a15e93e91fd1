//! `oab` — offline A/B testing for ranking policies.
//!
//! Subcommands: `gen-log` (simulate a production log), `estimate` (run
//! counterfactual estimators over a log), `sweep` and `quantiles` (capping
//! diagnostics as CSV plot data), `bench` (synthetic benchmark with online
//! ground truth) and `table1` (the heterogeneous-segment regression check).
//!
//! Every command takes an explicit `--seed`; there is no wall-clock default,
//! so identical invocations produce identical outputs, whatever
//! `--threads` says.

mod commands;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use oab_core::estimators::{CapMode, EstimatorKind};

/// Exit code for degenerate estimation (zero denominator, no overlap).
pub const EXIT_DEGENERATE: u8 = 1;
/// Exit code for usage and configuration errors.
pub const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "oab", version, about = "offline A/B testing for ranking policies")]
struct Cli {
    /// Worker threads (defaults to one per core); results do not depend
    /// on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a production log from an environment and a logging policy.
    GenLog(GenLogArgs),
    /// Run counterfactual estimators over a log.
    Estimate(EstimateArgs),
    /// Sweep the capping parameter; emits bias-bound/variance CSV data.
    Sweep(SweepArgs),
    /// Importance-weight quantiles under the target policy; emits CSV.
    Quantiles(QuantilesArgs),
    /// Run the synthetic benchmark suite against online ground truth.
    Bench(BenchArgs),
    /// Reproduce the heterogeneous-segment counter-example end to end.
    Table1(Table1Args),
}

#[derive(Args)]
struct GenLogArgs {
    /// Environment specification (JSON).
    #[arg(long)]
    env: PathBuf,
    /// Logging-policy specification (JSON).
    #[arg(long)]
    logging_policy: PathBuf,
    /// Number of samples to draw.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct EstimateArgs {
    /// Input log file.
    #[arg(long)]
    log: PathBuf,
    /// Target-policy specification (JSON).
    #[arg(long)]
    target_policy: PathBuf,
    /// Logging-policy specification; required by point-ncis and
    /// --recompute-propensities.
    #[arg(long)]
    logging_policy: Option<PathBuf>,
    /// Comma-separated estimators: is,nis,dr,cis,ncis,piece-ncis,point-ncis.
    #[arg(long, value_delimiter = ',', required = true)]
    estimators: Vec<EstimatorKind>,
    #[arg(long, default_value = "max")]
    cap_mode: CapMode,
    /// Capping parameter; required by the capped estimators.
    #[arg(long)]
    cap: Option<f64>,
    /// Monte-Carlo draws per positive sample (point-ncis) or per inner
    /// expectation (dr).
    #[arg(long, default_value_t = 100)]
    n_mc: usize,
    /// Bootstrap resamples for confidence intervals.
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    /// Recompute propensities from --logging-policy instead of trusting the
    /// logged ones (is only).
    #[arg(long, default_value_t = false)]
    recompute_propensities: bool,
    /// Shrink the capping per context (point-ncis, max mode only).
    #[arg(long, default_value_t = false)]
    adaptive_cap: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    target_policy: PathBuf,
    /// Comma-separated capping grid, e.g. 1,10,100.
    #[arg(long, value_delimiter = ',', required = true)]
    c_grid: Vec<f64>,
    #[arg(long, default_value = "max")]
    cap_mode: CapMode,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct QuantilesArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    target_policy: PathBuf,
    #[arg(long)]
    logging_policy: PathBuf,
    /// Sorted comma-separated quantiles in [0, 1].
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 0.9])]
    quantiles: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Suite specification (JSON).
    #[arg(long)]
    suite: PathBuf,
    /// Output directory for records.csv and summary.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct Table1Args {
    /// Log size for the offline side.
    #[arg(long, default_value_t = 1_000_000)]
    n: usize,
    /// Optional directory for the report file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
}

/// A command failure with its exit code.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn degenerate(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DEGENERATE,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_err()
        {
            eprintln!("error: could not configure {threads} worker threads");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match cli.command {
        Command::GenLog(args) => commands::gen_log(args),
        Command::Estimate(args) => commands::estimate(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::Quantiles(args) => commands::quantiles(args),
        Command::Bench(args) => commands::bench(args),
        Command::Table1(args) => commands::table1(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
