//! `corrsep` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use serde::Serialize;

mod commands;
mod config;
mod io;

/// Detect, localize and impute localized corruptions in vector data.
#[derive(Parser, Debug)]
#[command(name = "corrsep", version)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "CORRSEP_THREADS")]
    threads: Option<usize>,
    /// Omit the timestamp from JSON summaries so reruns are byte-identical.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect and localize corruptions in each test row.
    Detect(DetectArgs),
    /// Detect, localize and impute corruptions in each test row.
    Impute(ImputeArgs),
    /// Corrupt a data set (or a synthetic sample) with uniform noise.
    Simulate(SimulateArgs),
    /// ROC sweep and imputation metrics on data with known corruptions.
    Evaluate(EvaluateArgs),
    /// Analytic and enumerated false alarm rate of the search.
    Famodel(FamodelArgs),
    /// Two Gaussian imputation benchmark.
    Gaussian(GaussianArgs),
}

/// Options shared by commands that separate test rows.
#[derive(clap::Args, Serialize, Debug)]
struct ModelArgs {
    /// Clean reference CSV.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Neighbor rank of the score.
    #[arg(long)]
    k: Option<usize>,
    /// Per-node false alarm rate.
    #[arg(long)]
    tau: Option<f64>,
    /// Share of attribute deviations kept by the ranked distance.
    #[arg(long)]
    alpha: Option<f64>,
    /// Depth of the partition tree.
    #[arg(long)]
    depth: Option<usize>,
    /// Input CSVs have a header row.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    header: Option<bool>,
    /// Input CSVs carry an integer class label in the last column.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<bool>,
    /// Rescale attributes to [0, 1] using the reference set.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    scale: Option<bool>,
}

#[derive(clap::Args, Serialize, Debug)]
struct DetectArgs {
    /// JSON run configuration; flags override its keys.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Test CSV.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Per-row results as JSON lines (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-attribute 0/1 corruption mask CSV.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Run summary JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(clap::Args, Serialize, Debug)]
struct ImputeArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Imputed CSV in the layout of the test CSV (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Source reference row of every imputed node, as JSON lines.
    #[arg(long)]
    sources: Option<PathBuf>,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
    /// `map` or `nn`.
    #[arg(long)]
    method: Option<String>,
    /// Number of sibling-interval neighbors considered (defaults to k).
    #[arg(long)]
    neighborhood: Option<usize>,
    /// Neighborhood of ceil(gamma * sqrt(N)) rows instead of a fixed size.
    #[arg(long)]
    gamma: Option<f64>,
    /// Ranked-distance share for the sibling neighborhood (defaults to alpha).
    #[arg(long)]
    impute_alpha: Option<f64>,
}

#[derive(clap::Args, Serialize, Debug)]
struct SimulateArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// CSV to corrupt; a smooth Gaussian sample is drawn when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Corrupted CSV (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth 0/1 mask CSV.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Clean copy of the synthetic sample.
    #[arg(long)]
    clean_out: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    header: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<bool>,
    /// Probability that a row is corrupted.
    #[arg(long)]
    pi: Option<f64>,
    #[arg(long)]
    fraction_lo: Option<f64>,
    #[arg(long)]
    fraction_hi: Option<f64>,
    #[arg(long)]
    intervals_min: Option<usize>,
    #[arg(long)]
    intervals_max: Option<usize>,
    /// Corrupt a square of an image with this many rows (column-major).
    #[arg(long)]
    square_height: Option<usize>,
    #[arg(long)]
    square_width: Option<usize>,
    #[arg(long)]
    noise_lo: Option<f64>,
    #[arg(long)]
    noise_hi: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Synthetic sample size.
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    mean: Option<f64>,
    #[arg(long)]
    std: Option<f64>,
    /// Correlation of neighboring attributes in the synthetic sample.
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(clap::Args, Serialize, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Corrupted test CSV; with no reference a synthetic suite is run.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Ground-truth mask CSV aligned with the test rows.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Uncorrupted test CSV, for imputation quality.
    #[arg(long)]
    original: Option<PathBuf>,
    /// ROC table CSV (the summary carries the same points).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary (stdout if absent).
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    taus: Vec<f64>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    neighborhood: Option<usize>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    reference_rows: Option<usize>,
    #[arg(long)]
    test_rows: Option<usize>,
    #[arg(long)]
    pi: Option<f64>,
    #[arg(long)]
    fraction_lo: Option<f64>,
    #[arg(long)]
    fraction_hi: Option<f64>,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    std: Option<f64>,
}

#[derive(clap::Args, Serialize, Debug)]
struct FamodelArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    taus: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    thetas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    depths: Vec<usize>,
    /// CSV table (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Serialize, Debug)]
struct GaussianArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Neighborhood sizes.
    #[arg(long, value_delimiter = ',')]
    k_grid: Vec<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    per_class: Option<usize>,
    /// Neighbor rank of the candidate score (defaults to the neighborhood size).
    #[arg(long)]
    score_k: Option<usize>,
    #[arg(long)]
    ridge: Option<f64>,
    /// CSV table (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
}

/// Why a run failed; selects the exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or arguments (exit 1).
    Usage(String),
    /// A required key was not given (exit 1, with usage).
    Missing(String),
    /// Input data could not be read or used (exit 2).
    Data(String),
}

impl From<corrsep::Error> for Failure {
    fn from(e: corrsep::Error) -> Self {
        use corrsep::Error::*;
        match e {
            InvalidParam { .. } | NeighborOutOfRange { .. } | DepthTooLarge { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

pub struct Globals {
    pub timestamp: bool,
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
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: threads: {e}");
            return ExitCode::from(1);
        }
    }
    let globals = Globals {
        timestamp: !cli.no_timestamp,
    };
    let (name, result) = match &cli.command {
        Command::Detect(a) => ("detect", commands::detect(a, &globals)),
        Command::Impute(a) => ("impute", commands::impute(a, &globals)),
        Command::Simulate(a) => ("simulate", commands::simulate(a, &globals)),
        Command::Evaluate(a) => ("evaluate", commands::evaluate(a, &globals)),
        Command::Famodel(a) => ("famodel", commands::famodel(a, &globals)),
        Command::Gaussian(a) => ("gaussian", commands::gaussian(a, &globals)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Missing(key)) => {
            let mut cmd = Cli::command();
            cmd.build();
            let usage = cmd
                .find_subcommand_mut(name)
                .map(|c| c.render_usage().to_string())
                .unwrap_or_default();
            eprintln!("error: missing required key \"{key}\" (flag --{})\n\n{usage}", key.replace('_', "-"));
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
