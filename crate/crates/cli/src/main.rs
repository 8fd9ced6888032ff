//! `ticc` command-line driver.
//!
//! Every subcommand writes its outputs plus a `manifest.json` into
//! `--output-dir`. Failures exit nonzero with a single JSON object on stderr.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use ticc_core::TiccError;

#[derive(Debug, Parser)]
#[command(
    name = "ticc",
    version,
    about = "Toeplitz inverse covariance-based clustering of time series"
)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known segments and precisions.
    Generate(GenerateArgs),
    /// Fit a model to a series.
    Fit(FitArgs),
    /// Score a fitted model against ground truth.
    Evaluate(EvaluateArgs),
    /// Fit over a grid of K, beta or w values.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Cluster sequence, e.g. "1,2,1" or "1,2,3,4,1,2,3,4".
    #[arg(long, conflicts_with = "segments")]
    preset: Option<String>,
    /// Explicit segments as "cluster:length" pairs, e.g. "1:200,2:150,1:200".
    #[arg(long)]
    segments: Option<String>,
    /// Samples per segment for a preset (default 100 times the cluster count).
    #[arg(long)]
    per_segment: Option<usize>,
    /// Number of sensors.
    #[arg(short = 'n', long, default_value_t = 5)]
    sensors: usize,
    #[arg(short = 'w', long, default_value_t = 5)]
    window: usize,
    /// Probability that a candidate edge is present.
    #[arg(long, default_value_t = 0.2)]
    p_edge: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Debug, Args, Clone)]
struct ModelArgs {
    #[arg(short = 'K', long = "clusters", default_value_t = 2)]
    clusters: usize,
    #[arg(short = 'w', long, default_value_t = 5)]
    window: usize,
    /// Sparsity weight. Defaults to 0.015 * T / K.
    #[arg(long)]
    lambda: Option<f64>,
    /// Switching penalty.
    #[arg(long, default_value_t = 40.0)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// ADMM penalty parameter.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 100)]
    max_em_iters: usize,
    /// Initial assignment.
    #[arg(long, value_enum, default_value_t = Init::Contiguous)]
    init: Init,
    /// Run every loop on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Init {
    Contiguous,
    Random,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Series CSV, one row per time step.
    #[arg(long)]
    input: PathBuf,
    /// Skip the first line of the input.
    #[arg(long)]
    header: bool,
    #[command(flatten)]
    model: ModelArgs,
    /// Also write per-iteration ADMM residuals to admm_trace.csv.
    #[arg(long)]
    debug_trace: bool,
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Fitted model.json.
    #[arg(long)]
    model: PathBuf,
    /// Directory holding truth_labels.json and optionally truth_thetas.json.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum SweepParam {
    K,
    Beta,
    W,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    header: bool,
    /// Directory with truth_labels.json; enables the macro_f1 column.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Parameter to vary.
    #[arg(long, value_enum)]
    over: SweepParam,
    /// Values as a list "0,10,40" or an inclusive integer range "2..6".
    #[arg(long)]
    values: String,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    output_dir: PathBuf,
}

/// Error raised by the driver itself rather than the library.
#[derive(Debug)]
struct CliError {
    kind: &'static str,
    message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn cli_error(kind: &'static str, message: impl Into<String>) -> anyhow::Error {
    CliError {
        kind,
        message: message.into(),
    }
    .into()
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    if let Some(e) = err.downcast_ref::<CliError>() {
        return e.kind;
    }
    match err.downcast_ref::<TiccError>() {
        Some(TiccError::Io { .. }) => "io",
        Some(TiccError::Empty(_)) => "empty_input",
        Some(TiccError::RaggedRow { .. }) => "ragged_row",
        Some(TiccError::Parse { .. }) => "parse",
        Some(TiccError::NonFinite { .. }) => "non_finite",
        Some(TiccError::InvalidWindow { .. }) => "invalid_window",
        Some(TiccError::Dimension(_)) => "dimension",
        Some(TiccError::Asymmetric(_)) => "asymmetric",
        Some(TiccError::NotPositiveDefinite(_)) => "not_positive_definite",
        Some(TiccError::Eigen(_)) => "eigen",
        Some(TiccError::Config(_)) => "config",
        Some(TiccError::EmptyCluster { .. }) => "empty_cluster",
        Some(TiccError::Json(_)) => "json",
        None => "error",
    }
}

fn report(kind: &str, message: String) {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(cli_error("config", "--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Sweep(a) => commands::sweep(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", e.to_string().trim_end().to_string());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(error_kind(&e), format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
