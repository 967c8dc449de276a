//! `lobfield`: simulate the continuous-field order book, analyze simulated or recorded books,
//! fit market-order responses, solve the Fokker-Planck density and compare models.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Model, RunArgs};
use lob_field::Error;

#[derive(Debug, Parser)]
#[command(name = "lobfield", version, about = "Continuous-field limit order book simulator and analyzers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one seeded simulation; writes config.toml, records.jsonl and summary.json.
    Simulate(SimulateArgs),
    /// Compute statistics from a record stream or from order-book snapshots; one CSV each.
    Analyze(AnalyzeArgs),
    /// Fit the market-order response law to (v, buy, sell) data.
    FitMo(FitMoArgs),
    /// Stationary Fokker-Planck return density and its regime report.
    Fp(FpArgs),
    /// Run several models with a shared seed and analyze each.
    Compare(CompareArgs),
    /// Write synthetic inputs: a planted market-order dataset or snapshots of a simulation.
    GenSynthetic(GenArgs),
    /// Independent seeded runs in parallel, pooled into ⟨v²⟩ against n0.
    Ensemble(EnsembleArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Skip the per-tick record stream (summary only).
    #[arg(long)]
    pub no_records: bool,
}

/// Where an analysis frame comes from.
#[derive(Debug, Clone, Args)]
pub struct FrameArgs {
    /// StepRecord stream written by `simulate`.
    #[arg(long, conflicts_with = "snapshots")]
    pub records: Option<PathBuf>,
    /// Snapshot JSONL files, in time order.
    #[arg(long, num_args = 1..)]
    pub snapshots: Vec<PathBuf>,
    /// Market-order CSV (ts,buy,sell) matching the snapshots.
    #[arg(long, requires = "snapshots")]
    pub market_orders: Option<PathBuf>,
    /// Sampling interval for snapshots.
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    /// Log-price cell width for snapshots.
    #[arg(long, default_value_t = 1e-3)]
    pub dx: f64,
    /// Lattice length for snapshots.
    #[arg(long, default_value_t = 100)]
    pub lattice: usize,
    /// Measure x from the mid price instead of the trade price.
    #[arg(long)]
    pub mid: bool,
    /// Lattice cells kept in the frame (comma separated); 32 spread cells by default.
    #[arg(long, value_delimiter = ',')]
    pub bins: Vec<usize>,
    /// Keep every k-th record only.
    #[arg(long, default_value_t = 1)]
    pub every: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SuiteArgs {
    /// Statistic to compute (repeatable or comma separated); all when omitted.
    #[arg(long = "stat", value_delimiter = ',')]
    pub stats: Vec<String>,
    /// Log distances for the per-bin statistics (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<f64>,
    /// Reference log distance of the spatial correlation.
    #[arg(long)]
    pub x_ref: Option<f64>,
    /// Lag of Δn; the frame cadence by default.
    #[arg(long)]
    pub lag: Option<f64>,
    /// Velocity relaxation time used for returns; read from the record header when present.
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub frame: FrameArgs,
    #[command(flatten)]
    pub suite: SuiteArgs,
    /// Output directory.
    #[arg(short, long, default_value = "lobfield-analysis")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitMoArgs {
    /// Table with columns v, buy, sell (as written by `gen-synthetic mo`).
    #[arg(long, conflicts_with_all = ["records", "snapshots"])]
    pub table: Option<PathBuf>,
    #[command(flatten)]
    pub frame: FrameArgs,
    /// Output directory.
    #[arg(short, long, default_value = "lobfield-fit")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FpArgs {
    #[arg(long)]
    pub k0: f64,
    #[arg(long)]
    pub k_inf: f64,
    #[arg(long, default_value_t = 0.0)]
    pub k1: f64,
    #[arg(long)]
    pub v0: f64,
    #[arg(long)]
    pub n0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Grid points on each side of v = 0.
    #[arg(long, default_value_t = 4000)]
    pub half: usize,
    /// Output directory.
    #[arg(short, long, default_value = "lobfield-fp")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Models to run with the shared seed.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Model::Cf, Model::Cs])]
    pub models: Vec<Model>,
    #[command(flatten)]
    pub suite: SuiteArgs,
    /// Lattice cells kept in the frames (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub bins: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(subcommand)]
    pub kind: GenKind,
}

#[derive(Debug, Subcommand)]
pub enum GenKind {
    /// Planted market-order flows around a Gaussian velocity sample.
    Mo(GenMoArgs),
    /// Snapshots and market-order totals of a simulation, in the ingest formats.
    Book(GenBookArgs),
}

#[derive(Debug, Args)]
pub struct GenMoArgs {
    #[arg(long, default_value_t = 2.0)]
    pub k0: f64,
    #[arg(long, default_value_t = 3.0)]
    pub k_inf: f64,
    #[arg(long, default_value_t = 2.5)]
    pub k1: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub v0: f64,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Relative multiplicative noise on the flows.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output CSV file.
    #[arg(short, long, default_value = "market_orders_synthetic.csv")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenBookArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Ticks between snapshots.
    #[arg(long, default_value_t = 1)]
    pub every: usize,
    /// Price at log price 0.
    #[arg(long, default_value_t = 100.0)]
    pub p0: f64,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of seeds, counted up from the config seed.
    #[arg(long, default_value_t = 8)]
    pub seeds: u64,
    /// Log-spaced n0 bins of the pooled variance curve.
    #[arg(long, default_value_t = 12)]
    pub n0_bins: usize,
}

/// 2: usage or validation, 3: unusable data, 4: numerical failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_) | Error::Config(_) => 2,
        Error::Data(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 3,
        Error::Numeric(_) | Error::FitFailed { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::FitMo(a) => commands::fit_mo(&a),
        Command::Fp(a) => commands::fp(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::GenSynthetic(a) => commands::gen_synthetic(&a),
        Command::Ensemble(a) => commands::ensemble(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lobfield: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
