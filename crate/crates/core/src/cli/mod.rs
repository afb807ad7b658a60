//! The `dhaar` command line.
//!
//! Exit codes: 0 on success, 2 for usage or input errors, 3 when image and
//! model shapes disagree.

mod commands;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SHAPE: i32 = 3;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "DHAAR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dhaar", version, about = "Fully dispersed Haar-like filters for face detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a filter from a face directory and a clutter directory.
    Train(TrainArgs),
    /// Classify one image with one model or a composite of three.
    Classify(ClassifyArgs),
    /// Detect faces in a picture with three models.
    Detect(DetectArgs),
    /// Evaluate a model, or train and test on a stratified split.
    Eval(EvalArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Render a model's pixel sets as a PNG.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Sigmoid,
    Hardlim,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Skip histogram equalization.
    #[arg(long)]
    pub no_equalize: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    /// Total engaged pixels, split evenly between black and white.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_black: Option<usize>,
    #[arg(long)]
    pub n_white: Option<usize>,
    #[arg(long, value_enum, default_value = "sigmoid")]
    pub rule: RuleArg,
    /// Sigmoid shape parameter.
    #[arg(long, default_value_t = 20.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// `grid:RxC`, `band:r0:r1` or `rects:x0,y0,x1,y1[;...]`.
    #[arg(long)]
    pub region: Option<String>,
    /// Side of the square training canvas.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub faces: PathBuf,
    #[arg(long)]
    pub clutter: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, short, default_value = "model.json")]
    pub out: PathBuf,
    /// Defaults to `history.csv` next to the model.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Model file; give one, or three for the composite rule.
    #[arg(long = "model", short, required = true)]
    pub models: Vec<PathBuf>,
    pub image: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Exactly three model files (typically N = 256, 512 and 1024).
    #[arg(long = "model", short, required = true)]
    pub models: Vec<PathBuf>,
    pub picture: PathBuf,
    /// Detections JSON; standard output when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Annotated PNG with red boxes.
    #[arg(long)]
    pub annotate: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub min_side: usize,
    #[arg(long)]
    pub max_side: Option<usize>,
    #[arg(long, default_value_t = 1.25)]
    pub scale_step: f64,
    #[arg(long, default_value_t = 0.1)]
    pub stride_frac: f64,
    /// Required agreeing neighbours as a fraction of the window side.
    #[arg(long, default_value_t = 0.02)]
    pub support_frac: f64,
    /// Disable the skin prescreen.
    #[arg(long)]
    pub no_skin: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub faces: PathBuf,
    #[arg(long)]
    pub clutter: PathBuf,
    /// Evaluate this model on all images instead of training on a split.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.7)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Receives roc.csv and summary.json (plus model.json and history.csv
    /// when training).
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `separable` or `noisy`.
    pub kind: String,
    pub count: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub model: PathBuf,
    pub out: PathBuf,
}

/// A failed command: message plus exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn shape(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_SHAPE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DimensionMismatch { .. } => EXIT_SHAPE,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Runs one command, writing its standard output to `stdout`.
pub fn execute(cli: Cli, stdout: &mut dyn std::io::Write) -> CliResult {
    match cli.command {
        Command::Train(a) => commands::train_cmd(&a, stdout),
        Command::Classify(a) => commands::classify(&a, stdout),
        Command::Detect(a) => commands::detect(&a, stdout),
        Command::Eval(a) => commands::eval(&a, stdout),
        Command::Synth(a) => commands::synth(&a, stdout),
        Command::Inspect(a) => commands::inspect(&a, stdout),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
