//! `dasm` — texture/color adaptation training and adversarial robustness
//! evaluation from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use std::fmt;
use std::path::PathBuf;

#[derive(Debug)]
pub enum AppError {
    /// Bad flags, bad config, bad argument values → exit 2.
    Usage(String),
    /// Failures while doing the work (I/O, training, decoding) → exit 1.
    Runtime(String),
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Usage(m) | AppError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl AppError {
    fn code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Runtime(_) => 1,
        }
    }
}

impl From<dasm_core::Error> for AppError {
    fn from(e: dasm_core::Error) -> Self {
        match e {
            dasm_core::Error::InvalidArgument(m) | dasm_core::Error::Config(m) => {
                AppError::Usage(m)
            }
            other => AppError::Runtime(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "dasm",
    version,
    about = "Texture/color domain-adaptation workbench: train grayscale classifiers with a GLCM texture-preservation loss and measure robustness under gradient-based attacks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model variant and write a checkpoint.
    Train(TrainArgs),
    /// Load a checkpoint and sweep attacks × ε into a CSV report.
    AttackEval(AttackEvalArgs),
    /// Emit per-orientation GLCM texture features as CSV.
    Glcm(FeatureArgs),
    /// Emit first-order histogram statistics as CSV.
    Hist(HistArgs),
    /// Generate the two-class synthetic texture dataset as PNGs.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataSource {
    /// Dataset directory laid out as `<root>/<class_name>`/*.{png,pgm}.
    #[arg(long, conflicts_with = "synth")]
    data: Option<PathBuf>,
    /// Use the built-in synthetic texture dataset instead of --data.
    #[arg(long)]
    synth: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    source: DataSource,
    /// Model variant: base, tc, or tc-glcm.
    #[arg(long, default_value = "base")]
    variant: String,
    /// Config file of `key = value` lines (see README for keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttackEvalArgs {
    /// Trained checkpoint to evaluate.
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    source: DataSource,
    /// Comma-separated attacks out of: fgsm, bim, mifgsm, pgd.
    #[arg(long, default_value = "fgsm,bim,mifgsm,pgd")]
    attacks: String,
    /// Comma-separated ε values as k/255 rationals.
    #[arg(long, default_value = "1/255,2/255,3/255,4/255,5/255,6/255,7/255,8/255")]
    epsilons: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report CSV output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeatureArgs {
    /// Single image file.
    #[arg(long, conflicts_with = "dir")]
    image: Option<PathBuf>,
    /// Directory scanned recursively for PNG/PGM files.
    #[arg(long)]
    dir: Option<PathBuf>,
    /// Co-occurrence offset distance in pixels.
    #[arg(long, default_value_t = 3)]
    distance: usize,
    /// Number of gray levels.
    #[arg(long, default_value_t = 16)]
    levels: usize,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HistArgs {
    #[arg(long, conflicts_with = "dir")]
    image: Option<PathBuf>,
    #[arg(long)]
    dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Images per class.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Square image side in pixels.
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (one subdirectory per class).
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Train(args) => commands::train(args),
        Command::AttackEval(args) => commands::attack_eval(args),
        Command::Glcm(args) => commands::glcm_features(args),
        Command::Hist(args) => commands::hist_features(args),
        Command::Synth(args) => commands::synth(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}
