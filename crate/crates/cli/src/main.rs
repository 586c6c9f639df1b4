//! `mimic`: data generation, training, evaluation, ablation, latency and
//! streaming inference for the servo-command regressor.
//!
//! Exit status: 0 success, 1 internal error, 2 argument error, 3 format
//! error (bad file contents, version or checksum mismatch), 4 I/O error.

mod commands;
mod config;
mod error;
mod stream;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mimic_core::model::ModelKind;

use crate::config::{resolve_workers, FileConfig};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "mimic", version, about = "Facial expression imitation: blendshape features to servo commands")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads (overrides MIMIC_WORKERS and the config file).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Servo layout TOML (default: built-in layout).
    #[arg(long, global = true, value_name = "FILE")]
    layout: Option<PathBuf>,

    /// Landmark basis text file (default: shipped basis).
    #[arg(long, global = true, value_name = "FILE")]
    basis: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded dataset of (servo frame, observed features) records.
    GenData(GenDataArgs),
    /// Train a model and write its best-test checkpoint and loss history.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split and write a report directory.
    Eval(EvalArgs),
    /// Sweep the consistency weight with attention on and off.
    Ablate(AblateArgs),
    /// Stream feature frames (JSON lines) to servo frames.
    Mimic(MimicArgs),
    /// Measure single-frame forward latency.
    Latency(LatencyArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output dataset (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sim_seed: Option<u64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Do not store landmarks (the landmark baseline then cannot train).
    #[arg(long)]
    pub no_landmarks: bool,
}

#[derive(Debug, Args, Default)]
pub struct TrainingArgs {
    #[arg(long)]
    pub kind: Option<ModelKind>,
    /// Model initialization and shuffling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Consistency loss weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Early stop after this many epochs without a better test loss.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Replace attention with identity mixing.
    #[arg(long)]
    pub no_attention: bool,
    /// Cosine-decay the learning rate to this fraction of its initial value.
    #[arg(long)]
    pub lr_final_fraction: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct SplitArgs {
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub test_count: Option<usize>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss history CSV (default: checkpoint path with `.history.csv`).
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub trajectory_frames: Option<usize>,
    #[arg(long)]
    pub trajectory_seed: Option<u64>,
    /// Loss weight of the reported loss (default: the checkpoint's).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Write rendered human/robot faces of the first N test samples.
    #[arg(long)]
    pub images: Option<usize>,
    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated consistency weights.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Debug, Args)]
pub struct MimicArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Read frames from TCP connections on this address instead of stdin.
    #[arg(long, value_name = "ADDR")]
    pub listen: Option<String>,
    /// With --listen, exit after the first connection closes.
    #[arg(long)]
    pub once: bool,
}

#[derive(Debug, Args)]
pub struct LatencyArgs {
    /// Checkpoint to time (default: a freshly initialized model).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Model kind when no checkpoint is given.
    #[arg(long)]
    pub kind: Option<ModelKind>,
    #[arg(long)]
    pub frames: Option<usize>,
}

fn run(cli: Cli) -> CliResult {
    let mut file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    config::set(&mut file.layout, cli.layout.map(Some));
    config::set(&mut file.basis, cli.basis.map(Some));
    let env = std::env::var("MIMIC_WORKERS").ok();
    if let Some(n) = resolve_workers(cli.workers, env.as_deref(), file.workers)? {
        mimic_core::parallel::set_worker_count(n);
    }
    match cli.command {
        Command::GenData(a) => commands::gen_data(&file, a),
        Command::Train(a) => commands::train(&file, a),
        Command::Eval(a) => commands::eval(&file, a),
        Command::Ablate(a) => commands::ablate(&file, a),
        Command::Mimic(a) => stream::mimic(&file, a),
        Command::Latency(a) => commands::latency(&file, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mimic: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
