//! `negface`: enrol, verify and evaluate negative face templates.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit status for each failure class.
pub mod exit {
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const VALIDATION: u8 = 4;
    pub const COMPUTATION: u8 = 5;
}

#[derive(Debug, Parser)]
#[command(name = "negface", version, about = "Privacy-enhancing negative face templates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic identity-clustered embeddings.
    Synth(SynthArgs),
    /// Fit an enlargement network and quantizer.
    Train(TrainArgs),
    /// Enrol one negative template per subject into a gallery.
    Enroll(EnrollArgs),
    /// Score probes against their claimed identity's gallery entry.
    Verify(VerifyArgs),
    /// Cross-validated verification metrics.
    Eval(EvalArgs),
    /// Cross-validated soft-biometric attribute attacks.
    Attack(AttackArgs),
    /// Predicted score distributions, or their validation against data.
    Theory(TheoryArgs),
    /// Verification (and attack) metrics over a grid of k and L.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Enlargement {
    Trained,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 128-d input, 256/512/4096 trained network.
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairingKind {
    All,
    Sampled,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Bins per feature.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Template length L.
    #[arg(long = "big-l", visible_alias = "L", default_value_t = 512)]
    pub big_l: usize,
    #[arg(long, value_enum, default_value_t = Enlargement::Trained)]
    pub enlargement: Enlargement,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Hidden layer widths of a trained network (default 2d,4d).
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub subjects: usize,
    #[arg(long, default_value_t = 5)]
    pub captures: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0 / 6.0)]
    pub sigma_within: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_between: f64,
    #[arg(long, default_value_t = 2.5)]
    pub attribute_scale: f64,
    /// `name:classes:strength`, repeatable.
    #[arg(long = "attribute", default_value = "gender:2:0.8")]
    pub attributes: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Directory receiving model.nenl and quantizer.nqnt.
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EnrollArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub quantizer: PathBuf,
    /// Gallery file to write.
    #[arg(long)]
    pub output: PathBuf,
    /// Existing gallery to extend.
    #[arg(long)]
    pub base_gallery: Option<PathBuf>,
    /// Seeds the negation; without it, OS entropy is used.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub quantizer: PathBuf,
    /// Decision CSV to write.
    #[arg(long)]
    pub output: PathBuf,
    /// Accept when the score is at least this.
    #[arg(long, conflicts_with = "calibration")]
    pub threshold: Option<f64>,
    /// Embeddings whose EER threshold becomes the decision threshold.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Directory receiving report.txt, folds.csv and roc.csv.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, value_enum, default_value_t = PairingKind::All)]
    pub pairing: PairingKind,
    /// Imposter comparisons per fold under sampled pairing.
    #[arg(long, default_value_t = 10_000)]
    pub imposters: usize,
    #[arg(long)]
    pub target_fmr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Directory receiving attack.csv and report.txt.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub attribute: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, default_value_t = 5)]
    pub neighbors: usize,
    /// Also write all three representations of the full input here.
    #[arg(long)]
    pub export: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Positive-domain distance D.
    #[arg(long = "distance", visible_alias = "D", conflicts_with_all = ["distances", "input"])]
    pub distance: Option<usize>,
    /// File with one positive-domain distance per line.
    #[arg(long, conflicts_with = "input")]
    pub distances: Option<PathBuf>,
    /// Embeddings to validate the prediction against.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub comparisons: usize,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "3,4")]
    pub k_values: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "64,256,1024")]
    pub l_values: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Also attack this attribute at every grid point.
    #[arg(long)]
    pub attribute: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("negface: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
