//! `lipfield` command-line tool.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "lipfield", version, about = "Speech-driven 3D talking heads")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub fps: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Topology asset file (JSON).
    #[arg(long, global = true)]
    pub topology: Option<PathBuf>,
    #[arg(long = "checkpoint-s2l", global = true)]
    pub checkpoint_s2l: Option<PathBuf>,
    #[arg(long = "checkpoint-s2d", global = true)]
    pub checkpoint_s2d: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    pub encoder: Option<EncoderKind>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Pretrained,
    Spectrogram,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a dataset directory and topology assets (toy or converted VOCAset).
    PrepareData(commands::PrepareArgs),
    /// Train the speech-to-landmarks model.
    TrainS2l(commands::TrainArgs),
    /// Train the sparse-to-dense decoder.
    TrainS2d(commands::TrainArgs),
    /// Animate a neutral mesh from an audio file.
    Animate(commands::AnimateArgs),
    /// Score checkpoints or stored predictions against a dataset.
    Evaluate(commands::EvaluateArgs),
    /// Rasterise a motion container to PNG frames.
    RenderFrames(commands::RenderArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::from(1)
        }
    }
}
