//! Subcommand implementations behind the `sens-asr` binary. Each takes its
//! parsed arguments and the writer standing in for stdout.

mod checks;
mod decode;
mod eval;
mod pairs;
mod synth;
mod train;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{CliError, Result};

pub use checks::{GradCheckArgs, OracleCheckArgs};
pub use decode::{stream_decode, DecodeArgs};
pub use eval::EvalArgs;
pub use pairs::{build_pairs, BuildPairsArgs};
pub use synth::SynthArgs;
pub use train::TrainArgs;

#[derive(Debug, Parser)]
#[command(name = "sens-asr", version, about = "Streaming transducer ASR with semantic chunk context")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a manifest; logs one line per step.
    Train(TrainArgs),
    /// Decode chunk by chunk through the streaming engine.
    DecodeStream(DecodeArgs),
    /// Decode with the chunk-masked offline forward pass.
    DecodeOffline(DecodeArgs),
    /// Word error rate, bootstrap interval and edit breakdown.
    Eval(EvalArgs),
    /// Build teacher fine-tuning triplets from a corpus and paraphrases.
    BuildPairs(BuildPairsArgs),
    /// Write the synthetic grammar corpus and its companion files.
    SynthData(SynthArgs),
    /// Finite-difference check of every differentiable operation.
    GradCheck(GradCheckArgs),
    /// Compare the loss recursions and attention masks with brute force.
    OracleCheck(OracleCheckArgs),
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(a) => train::run(a, out),
        Command::DecodeStream(a) => decode::run(a, decode::Mode::Stream, out),
        Command::DecodeOffline(a) => decode::run(a, decode::Mode::Offline, out),
        Command::Eval(a) => eval::run(a, out),
        Command::BuildPairs(a) => pairs::run(a, out),
        Command::SynthData(a) => synth::run(a, out),
        Command::GradCheck(a) => checks::grad_check(a, out),
        Command::OracleCheck(a) => checks::oracle_check(a, out),
    }
}

/// Configuration stored next to a checkpoint.
pub fn config_path_for(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".conf");
    PathBuf::from(name)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(CliError::io(Path::new("<stdout>")))
}

/// Writes `text` to `path`, or to `out` when no path is given.
fn emit_to(path: Option<&Path>, out: &mut dyn Write, text: &str) -> Result<()> {
    match path {
        Some(p) => crate::error::write_bytes(p, text.as_bytes()),
        None => emit(out, text),
    }
}
