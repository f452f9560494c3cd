//! `lighthash`: hash, mine, verify, sweep and report.
//!
//! Exit codes: 0 success, 1 a chain or block failed validation (or mining
//! ran out of attempts), 2 bad usage or unreadable input.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::BackendKind;

#[derive(Parser, Debug)]
#[command(name = "lighthash", version, about = "LightHash optical proof-of-work toolkit")]
struct Cli {
    /// JSON run configuration. Flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed.
    #[arg(long, global = true, env = "LIGHTHASH_SEED")]
    seed: Option<u64>,
    /// Worker threads for mining rounds and sweep cells. Output does not
    /// depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Hash one header and nonce.
    Hash(HashArgs),
    /// Mine blocks onto a chain directory.
    Mine(MineArgs),
    /// Validate a chain directory.
    Verify(VerifyArgs),
    /// Run an error sweep and write CSV.
    Sweep(SweepArgs),
    /// Energy per hash.
    Energy(EnergyArgs),
    /// The consensus threshold for a header's matrix.
    Threshold(ThresholdArgs),
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
struct HeaderSource {
    /// Header as hex.
    #[arg(long)]
    header: Option<String>,
    /// File holding the header, raw or as hex.
    #[arg(long)]
    header_file: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct DeviceArgs {
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// JSON error profile for the photonic backend.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Copies averaged by the photonic backend.
    #[arg(long)]
    r: Option<usize>,
}

#[derive(Args, Debug)]
struct HashArgs {
    #[command(flatten)]
    source: HeaderSource,
    #[arg(long, default_value_t = 0)]
    nonce: u64,
    #[command(flatten)]
    device: DeviceArgs,
    /// Also print the per-chunk trace.
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Args, Debug)]
struct MineArgs {
    #[arg(long)]
    chain: Option<PathBuf>,
    /// One transaction per line. Each block also gets a coinbase line.
    #[arg(long)]
    transactions: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Constant difficulty, replacing the configured schedule.
    #[arg(long)]
    difficulty: Option<u16>,
    #[arg(long)]
    max_attempts: Option<u64>,
    #[command(flatten)]
    device: DeviceArgs,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    chain: Option<PathBuf>,
    /// Also check each block's difficulty against the configured schedule.
    #[arg(long)]
    schedule: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SweepKind {
    Scaling,
    Feasibility,
    Dispersion,
    Correction,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(value_enum)]
    kind: SweepKind,
    /// CSV path. Defaults to `<output_dir>/<kind>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    k_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    devices: Option<usize>,
    /// Copies for the correction sweep.
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EnergyArgs {
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Adds the matrix state-space size to the table.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    comparator_fj: Option<f64>,
    #[arg(long)]
    modulator_fj: Option<f64>,
    #[arg(long)]
    digital_op_pj: Option<f64>,
    #[arg(long)]
    sha_pj: Option<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct ThresholdArgs {
    #[command(flatten)]
    source: HeaderSource,
    /// Also print P(|s| > t).
    #[arg(short, long)]
    verbose: bool,
}

/// How a command failed, which picks the exit code.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Invalid(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Usage(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("{e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
