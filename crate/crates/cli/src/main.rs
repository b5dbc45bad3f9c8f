//! `vortexcast`: simulate cylinder wakes, build datasets, train, evaluate,
//! compare and render.
//!
//! Exit codes: 0 success, 1 run failure (e.g. solver divergence), 2 bad or
//! missing config, 3 output exists (use `--force`), 4 missing upstream
//! artifact, 5 bad flag or field name.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use vortexcast::model::Variant;
use vortexcast::render::Field;

pub const SIMULATION_DIR: &str = "simulation";
pub const DATASET_DIR: &str = "dataset";
pub const COMPARE_DIR: &str = "compare";
pub const RENDER_DIR: &str = "render";
/// Written into every output directory.
pub const RUN_MANIFEST: &str = "run.txt";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{} already exists; pass --force to overwrite", .0.display())]
    Exists(PathBuf),
    #[error("missing {what}: expected {}", .path.display())]
    Missing { what: &'static str, path: PathBuf },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] vortexcast::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Run(_) => 1,
            CliError::Config(_) => 2,
            CliError::Exists(_) => 3,
            CliError::Missing { .. } => 4,
            CliError::Usage(_) => 5,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "vortexcast", version, about = "Cylinder-wake simulation and ConvLSTM flow prediction")]
pub struct Cli {
    /// Run configuration file; paths inside it are relative to its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `[run] seed` (model initialisation and batch order).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Replace existing output directories.
    #[arg(long, global = true)]
    pub force: bool,
    /// Overrides `[run] out`, the root of all output directories.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the flow solver; writes snapshots, forces.csv and the Strouhal number.
    Simulate,
    /// Crop, normalize, window and split the snapshots.
    Dataset,
    /// Train one model variant on the dataset.
    Train(VariantArgs),
    /// Test-set metrics, persistence baseline and rollout metrics of a trained model.
    Eval(EvalArgs),
    /// Train both variants with one seed and budget; emit the comparison table.
    Compare,
    /// Render a snapshot directory or tensor file as PGM (and optionally PPM) images.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct VariantArgs {
    /// Model variant; defaults to `[run] variant`.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub variant: VariantArgs,
    /// Autoregressive rollout length.
    #[arg(long, default_value_t = 1)]
    pub horizon: usize,
    /// Number of test samples whose predictions are saved as tensors.
    #[arg(long, default_value_t = 4)]
    pub save_predictions: usize,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// A snapshot directory, or a `.vten` tensor of shape (h, w), (C, h, w) or (T, C, h, w).
    pub input: PathBuf,
    /// u, v, p or mag.
    #[arg(long, default_value = "v")]
    pub field: String,
    /// Snapshot index, or frame index of a (T, C, h, w) tensor; defaults to the last.
    #[arg(long)]
    pub frame: Option<usize>,
    /// Also write a blue-white-red PPM.
    #[arg(long)]
    pub color: bool,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: vortexcast::Error| e.to_string())
}

pub fn parse_field(s: &str) -> Result<Field, CliError> {
    s.parse().map_err(|e: vortexcast::Error| CliError::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 5 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}
