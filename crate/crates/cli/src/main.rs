//! `mcld`: data synthesis, teacher training, distillation, evaluation,
//! ablation grids, transfer probes and plots.

mod commands;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::RunFlags;

#[derive(Debug, Parser)]
#[command(name = "mcld", version, about = "Contrastive logit distillation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Config file (TOML). Flags override individual keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory. Defaults to `$MCLD_OUT_ROOT/<command>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (record files plus manifest).
    SynthData {
        #[command(flatten)]
        common: Common,
        /// Generator seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a teacher with cross-entropy.
    TrainTeacher {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: RunFlags,
        #[arg(long)]
        resume: bool,
    },
    /// Train a student against a frozen teacher.
    Distill {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: RunFlags,
        /// Teacher checkpoint, overriding `teacher.checkpoint`.
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        resume: bool,
    },
    /// Top-1/top-5 accuracy of a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test", value_parser = ["train", "test"])]
        split: String,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// One distillation run per combination of the chosen axes.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: RunFlags,
        /// e.g. `instance,sample,category` or `warmup_end_epoch=1:155`.
        #[arg(long, default_value = "instance,sample,category")]
        axes: String,
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Linear probe on frozen penultimate features.
    Probe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Seed for the validation hold-out.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Method column of the appended metrics row.
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// t-SNE scatter of penultimate features.
    PlotTsne {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to extract features with (needs --config).
        #[arg(long, conflicts_with = "features")]
        checkpoint: Option<PathBuf>,
        /// Directory written by `probe` (feature tables plus manifest).
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, default_value = "test", value_parser = ["train", "test"])]
        split: String,
        #[arg(long, default_value_t = 500)]
        max_points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
    },
    /// Heat map of |student − teacher| class-correlation differences.
    PlotCorr {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        student: PathBuf,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long, default_value = "test", value_parser = ["train", "test"])]
        split: String,
    },
    /// Seconds per batch against top-1 accuracy, one point per run.
    PlotTiming {
        #[command(flatten)]
        common: Common,
        /// Run directories or metrics.jsonl files.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
