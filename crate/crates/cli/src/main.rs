//! `ilk`: illuminant estimation, correction and evaluation from the shell.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod commands;
mod config;
mod spec;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

/// A malformed invocation: bad flag values, unknown estimators, missing
/// required combinations, unreadable config files.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "ilk", version, about = "Illuminant estimation, correction and evaluation for linear RGB images")]
pub struct Cli {
    /// TOML file with default flag values; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Extract chromaticity-histogram features for every manifest image.
    Extract(ExtractArgs),
    /// Train a regression model and write it to disk.
    Train(TrainArgs),
    /// Estimate the illuminant of one image or of every manifest image.
    Estimate(EstimateArgs),
    /// White-balance an image and write a 16-bit PNG plus JSON sidecar.
    Correct(CorrectArgs),
    /// Compare estimators over repeated train/validation/test splits.
    Evaluate(EvaluateArgs),
    /// Render synthetic Mondrian scenes with a manifest.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long, value_name = "CSV")]
    pub manifest: PathBuf,
    /// Output feature file.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Histogram bins per chromaticity axis.
    #[arg(long, default_value_t = ilk_core::features::DEFAULT_BINS)]
    pub bins: usize,
}

/// Grid axes replacing the defaults, as comma-separated lists.
#[derive(Args, Debug, Default)]
pub struct GridArgs {
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub grid_c: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub grid_gamma: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub grid_eps: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_name = "CSV")]
    pub manifest: PathBuf,
    /// builtin:hist[N] or file:PATH.
    #[arg(long, value_name = "SOURCE")]
    pub features: String,
    /// Learner with optional fixed hyperparameters, e.g. msvr or mrr:c=1.
    #[arg(long, value_name = "SPEC")]
    pub estimator: String,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Fraction of images held out to score grid points.
    #[arg(long, default_value_t = 0.3)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output model file.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long, value_name = "PATH", conflicts_with = "manifest", required_unless_present = "manifest")]
    pub image: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub manifest: Option<PathBuf>,
    /// gw, wp, sog, ggw, ge1, ge2, dn (with :key=value parameters) or model:PATH.
    #[arg(long, value_name = "SPEC")]
    pub estimator: String,
    /// Feature source for model estimators (default: derived from the model).
    #[arg(long, value_name = "SOURCE")]
    pub features: Option<String>,
    /// The single input image is gamma-encoded rather than linear.
    #[arg(long)]
    pub encoded: bool,
    /// Print JSON instead of plain text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct CorrectArgs {
    #[arg(long, value_name = "PATH")]
    pub image: PathBuf,
    #[arg(long, value_name = "SPEC", required_unless_present = "illuminant", conflicts_with = "illuminant")]
    pub estimator: Option<String>,
    /// Explicit illuminant, e.g. 0.6,0.5,0.3.
    #[arg(long, value_name = "R,G,B", allow_hyphen_values = true)]
    pub illuminant: Option<String>,
    /// Output 16-bit PNG; a .json sidecar is written next to it.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[arg(long)]
    pub encoded: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SensorArg {
    Broadband,
    Narrowband,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "CSV")]
    pub manifest: PathBuf,
    /// Estimator to compare; repeat for several.
    #[arg(long = "estimator", value_name = "SPEC", required = true)]
    pub estimators: Vec<String>,
    /// Feature source for learned estimators: builtin:hist[N] or file:PATH.
    #[arg(long, value_name = "SOURCE")]
    pub features: Option<String>,
    /// Patch augmentation for learned estimators: random[:n=10] or sliding[:stride=224].
    #[arg(long, value_name = "SPEC")]
    pub augment: Option<String>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 30)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Table shows statistics over all pooled test errors instead of the
    /// mean of per-repeat statistics.
    #[arg(long)]
    pub pooled: bool,
    /// Write the JSON report here.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Print the JSON report instead of the table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SensorArg::Broadband)]
    pub sensors: SensorArg,
    /// Mondrian cells per side.
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
    /// Pixels per cell side.
    #[arg(long, default_value_t = 8)]
    pub patch_size: usize,
    /// Also write white-balanced reference renders as <id>_canonical.png.
    #[arg(long)]
    pub canonical: bool,
    #[arg(long, default_value = "synthetic")]
    pub name: String,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.is::<UsageError>() || matches!(e.downcast_ref::<ilk_core::Error>(), Some(ilk_core::Error::Config(_)))
    });
    if usage {
        2
    } else {
        1
    }
}

fn run(mut args: Vec<OsString>) -> anyhow::Result<()> {
    let command = Cli::command();
    if let Some(path) = config::take_config_flag(&mut args)? {
        config::apply_config(&command, &mut args, &PathBuf::from(path))?;
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    commands::dispatch(cli.command)
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
