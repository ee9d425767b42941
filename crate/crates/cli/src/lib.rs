//! Command-line front end: CSV ingestion, configuration layering, the
//! simulate / fit / select / score / summarize commands and run manifests.

pub mod commands;
pub mod config;
pub mod draws;
pub mod error;
pub mod io;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rolem::simgen::ErrorKind;
use rolem::{CorrKind, ErrorModel};

use crate::config::{Criterion, FrameKind, Preset, PriorPreset};
pub use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "rolem", version, about = "Bayesian robust longitudinal envelope models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic datasets with ground truth.
    Simulate(SimulateArgs),
    /// Fit one model and write draws, summaries and diagnostics.
    Fit(FitArgs),
    /// Fit a grid of candidate models and rank them by BIC or WAIC.
    Select(SelectArgs),
    /// Compare fits against ground truth.
    Score(ScoreArgs),
    /// Re-summarize an existing draws file.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rerun with the config recorded in a manifest; explicit flags take precedence.
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
}

fn parse_corr(s: &str) -> Result<CorrKind, String> {
    s.parse().map_err(|e: rolem::RolemError| e.to_string())
}

fn parse_error_model(s: &str) -> Result<ErrorModel, String> {
    s.parse().map_err(|e: rolem::RolemError| e.to_string())
}

fn parse_error_kind(s: &str) -> Result<ErrorKind, String> {
    s.parse().map_err(|e: rolem::RolemError| e.to_string())
}

/// Model and sampler flags shared by `fit` and `select`.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Long-format CSV: subject_id,time_index,y_1..y_r,x_1..x_p.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Error model: t or normal.
    #[arg(long, value_parser = parse_error_model)]
    pub error_model: Option<ErrorModel>,
    #[arg(long, value_enum)]
    pub prior: Option<PriorPreset>,
    /// Structured Langevin prior M1..M4 (1-4); needs r divisible by 4.
    #[arg(long)]
    pub structured_prior: Option<usize>,
    /// Burn-in sweeps (proposal scales adapt during these).
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Sweeps after burn-in.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Keep every k-th post-burn-in sweep.
    #[arg(long)]
    pub thin: Option<usize>,
    /// Master seed; chain c uses seed + c.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep the initial proposal scales fixed during burn-in.
    #[arg(long)]
    pub no_autotune: bool,
    /// Sweeps between proposal-scale adjustments.
    #[arg(long)]
    pub tune_window: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Standardize every y and x column before fitting.
    #[arg(long)]
    pub standardize: bool,
    /// Drop a whole subject, not just the row, when a cell is missing.
    #[arg(long)]
    pub strict_missing: bool,
    #[arg(long, value_enum)]
    pub frame: Option<FrameKind>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Envelope dimension.
    #[arg(long)]
    pub u: Option<usize>,
    /// Working correlation: uncor, cs or ar1.
    #[arg(long, value_parser = parse_corr)]
    pub corr: Option<CorrKind>,
    /// Independent chains, run concurrently.
    #[arg(long)]
    pub chains: Option<usize>,
    /// HPD level for the summary.
    #[arg(long)]
    pub level: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Candidate envelope dimensions, e.g. 1,2,3,4.
    #[arg(long, value_delimiter = ',')]
    pub u_grid: Option<Vec<usize>>,
    /// Candidate correlation structures, e.g. uncor,cs,ar1.
    #[arg(long, value_delimiter = ',', value_parser = parse_corr)]
    pub corr_grid: Option<Vec<CorrKind>>,
    #[arg(long, value_enum)]
    pub criterion: Option<Criterion>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Response dimension.
    #[arg(long)]
    pub r: Option<usize>,
    /// Covariate dimension.
    #[arg(long)]
    pub p: Option<usize>,
    /// True envelope dimension.
    #[arg(long)]
    pub u: Option<usize>,
    /// Subjects per dataset.
    #[arg(long)]
    pub n: Option<usize>,
    /// Time points per subject.
    #[arg(long = "J", alias = "j")]
    pub j: Option<usize>,
    /// True correlation parameter.
    #[arg(long)]
    pub rho: Option<f64>,
    /// True correlation structure: uncor, cs or ar1.
    #[arg(long, value_parser = parse_corr)]
    pub corr: Option<CorrKind>,
    /// t4, normal_var2 or mixture.
    #[arg(long, value_parser = parse_error_kind)]
    pub error_kind: Option<ErrorKind>,
    /// Master seed; replicate k uses stream k.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Datasets to generate.
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Fit output directory; repeat for replicates.
    #[arg(long = "fit")]
    pub fits: Vec<PathBuf>,
    /// Ground-truth file; one per --fit, in the same order.
    #[arg(long = "truth")]
    pub truths: Vec<PathBuf>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Fit output directory containing draws.csv.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Summarize every draws column.
    #[arg(long)]
    pub all: bool,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate::run(a),
        Command::Fit(a) => commands::fit::run(a),
        Command::Select(a) => commands::select::run(a),
        Command::Score(a) => commands::score::run(a),
        Command::Summarize(a) => commands::summarize::run(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("rolem: {e}");
            e.exit_code()
        }
    }
}
