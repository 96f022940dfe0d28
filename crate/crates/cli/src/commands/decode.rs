use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use sens_asr_core::chunk_mask::ms_to_frames;
use sens_asr_core::encoder::DOWNSAMPLE;
use sens_asr_core::model::SensModel;
use sens_asr_core::params::ParamSet;
use sens_asr_core::streaming::{Stream, StreamConfig};
use sens_asr_core::transducer::{Emission, DEFAULT_MAX_SYMBOLS};
use sens_asr_core::Tensor;

use super::{config_path_for, emit_to};
use crate::binio::{load_checkpoint, load_features};
use crate::config::{parse_left_context, RunConfig};
use crate::data::load_vocabulary;
use crate::error::{CliError, Result};
use crate::manifest::load_training;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Stream,
    Offline,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Feature files; the utterance id is the file stem.
    pub features: Vec<PathBuf>,
    /// Decode every utterance of a training-style manifest instead.
    #[arg(long, conflicts_with = "features")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Run configuration; defaults to `<checkpoint>.conf`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Chunk size in milliseconds; full context when omitted (offline only).
    #[arg(long)]
    pub chunk_ms: Option<f64>,
    /// Encoder left context in chunks, or `unlimited`.
    #[arg(long, default_value = "unlimited")]
    pub left_chunks: String,
    /// Context-module window in chunks, or `unlimited`; the trained value by default.
    #[arg(long)]
    pub context_window: Option<String>,
    /// Cap on symbols emitted per encoder frame.
    #[arg(long, default_value_t = DEFAULT_MAX_SYMBOLS)]
    pub max_symbols: usize,
    /// Transcript output; stdout by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write `utterance_id<TAB>token<TAB>frame_index` lines here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Accepted for uniformity; decoding draws no random numbers.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn inputs(args: &DecodeArgs) -> Result<Vec<(String, PathBuf)>> {
    if let Some(m) = &args.manifest {
        return Ok(load_training(m)?
            .into_iter()
            .map(|r| (r.id, r.features))
            .collect());
    }
    if args.features.is_empty() {
        return Err(CliError::Usage("give feature files or --manifest".into()));
    }
    args.features
        .iter()
        .map(|p| {
            let id = p
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| CliError::Usage(format!("no utterance id in {}", p.display())))?;
            Ok((id.to_string(), p.clone()))
        })
        .collect()
}

/// Feeds `features` to a fresh stream in blocks of one chunk and closes it.
pub fn stream_decode(
    model: &SensModel,
    params: &ParamSet<f32>,
    features: &Tensor<f32>,
    config: StreamConfig,
) -> Result<Vec<Emission>> {
    let mut stream = Stream::open(model, params, config)?;
    let (rows, dim) = features.dims2();
    let step = DOWNSAMPLE * config.chunk_frames;
    let mut emissions = Vec::new();
    for start in (0..rows).step_by(step) {
        let end = (start + step).min(rows);
        let block = Tensor::new(&[end - start, dim], features.data()[start * dim..end * dim].to_vec())?;
        emissions.extend(stream.push_chunk(&block)?);
    }
    emissions.extend(stream.close()?.final_emissions);
    Ok(emissions)
}

pub fn run(args: DecodeArgs, mode: Mode, out: &mut dyn Write) -> Result<()> {
    if mode == Mode::Stream && args.chunk_ms.is_none() {
        return Err(CliError::Usage("decode-stream needs --chunk-ms".into()));
    }
    let config_path = args
        .config
        .clone()
        .unwrap_or_else(|| config_path_for(&args.checkpoint));
    let config = RunConfig::load(&config_path)?;
    let vocab = load_vocabulary(&args.vocab)?;
    let model_config = config.model_for(vocab.len())?;
    let (model, params) = SensModel::from_tensors(&model_config, load_checkpoint(&args.checkpoint)?)?;
    let left = parse_left_context(&args.left_chunks)?;
    let window = args.context_window.as_deref().map(parse_left_context).transpose()?;
    let chunk = args
        .chunk_ms
        .map(|ms| ms_to_frames(ms, config.train.policy.frame_ms))
        .transpose()?;
    let mut transcripts = String::new();
    let mut trace = String::new();
    for (id, path) in inputs(&args)? {
        let features = load_features(&path)?;
        let emissions = match mode {
            Mode::Offline => {
                model
                    .decode_offline(
                        &params,
                        &features,
                        chunk.unwrap_or(usize::MAX),
                        left,
                        window,
                        args.max_symbols,
                    )?
                    .emissions
            }
            Mode::Stream => {
                let config = StreamConfig {
                    chunk_frames: chunk.expect("checked on entry"),
                    left_context: left,
                    context_window: window,
                    max_symbols: args.max_symbols,
                };
                stream_decode(&model, &params, &features, config)?
            }
        };
        let tokens: Vec<usize> = emissions.iter().map(|e| e.token).collect();
        transcripts.push_str(&format!("{id}\t{}\n", vocab.decode(&tokens)));
        for e in &emissions {
            let symbol = vocab.symbol(e.token).unwrap_or("?");
            trace.push_str(&format!("{id}\t{symbol}\t{}\n", e.frame));
        }
    }
    if let Some(p) = &args.trace {
        crate::error::write_bytes(p, trace.as_bytes())?;
    }
    emit_to(args.out.as_deref(), out, &transcripts)
}
