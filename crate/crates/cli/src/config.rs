//! Line-oriented `key = value` run configuration. `#` starts a comment;
//! unknown keys are errors. Command-line flags are applied after the file.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use sens_asr_core::chunk_mask::LeftContext;
use sens_asr_core::model::ModelConfig;
use sens_asr_core::train::{OptimizerConfig, OptimizerKind, TrainConfig};

use crate::error::{read_to_string, CliError, Result};

/// Everything a run needs besides file paths. `model.vocab_size` is taken
/// from the vocabulary file, not from the configuration text.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Worker threads for per-example gradients; results are summed in
    /// batch order, so the count never changes the numbers.
    pub threads: usize,
    /// Save a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::desk(8, 2),
            train: TrainConfig::default(),
            threads: 1,
            checkpoint_every: 0,
        }
    }
}

/// Published model and optimizer settings.
pub fn published_config(feat_dim: usize) -> RunConfig {
    RunConfig {
        model: ModelConfig::published(feat_dim, 2),
        train: TrainConfig {
            optimizer: OptimizerConfig::published(),
            ..TrainConfig::default()
        },
        ..RunConfig::default()
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("invalid value {value:?} for {key}")))
}

pub fn parse_left_context(value: &str) -> Result<LeftContext> {
    if value.eq_ignore_ascii_case("unlimited") {
        Ok(LeftContext::Unlimited)
    } else {
        Ok(LeftContext::Chunks(parse("left context", value)?))
    }
}

pub fn format_left_context(left: LeftContext) -> String {
    match left {
        LeftContext::Unlimited => "unlimited".into(),
        LeftContext::Chunks(p) => p.to_string(),
    }
}

fn show(v: impl Display) -> String {
    v.to_string()
}

impl RunConfig {
    /// Canonical key order, also the order of [`RunConfig::to_text`].
    pub const KEYS: [&'static str; 30] = [
        "feat_dim",
        "encoder_layers",
        "d_model",
        "encoder_heads",
        "encoder_ffn_dim",
        "conv_kernel",
        "max_positions",
        "context_layers",
        "teacher_dim",
        "context_window",
        "context_heads",
        "context_ffn_dim",
        "pred_dim",
        "joint_dim",
        "alpha",
        "lambda_fastemit",
        "chunked_batch_fraction",
        "chunk_ms_min",
        "chunk_ms_max",
        "frame_ms",
        "optimizer",
        "learning_rate",
        "weight_decay",
        "max_grad_norm",
        "batch_size",
        "steps",
        "seed",
        "frozen_prefixes",
        "threads",
        "checkpoint_every",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let enc = &mut self.model.encoder;
        let ctx = &mut self.model.context;
        let tr = &mut self.train;
        match key {
            "feat_dim" => enc.feat_dim = parse(key, value)?,
            "encoder_layers" => enc.num_layers = parse(key, value)?,
            "d_model" => enc.d_model = parse(key, value)?,
            "encoder_heads" => enc.num_heads = parse(key, value)?,
            "encoder_ffn_dim" => enc.ffn_dim = parse(key, value)?,
            "conv_kernel" => enc.conv_kernel = parse(key, value)?,
            "max_positions" => enc.max_positions = parse(key, value)?,
            "context_layers" => ctx.num_decoder_layers = parse(key, value)?,
            "teacher_dim" => ctx.teacher_dim = parse(key, value)?,
            "context_window" => ctx.window = parse_left_context(value)?,
            "context_heads" => ctx.num_heads = parse(key, value)?,
            "context_ffn_dim" => ctx.ffn_dim = parse(key, value)?,
            "pred_dim" => self.model.pred_dim = parse(key, value)?,
            "joint_dim" => self.model.joint_dim = parse(key, value)?,
            "alpha" => tr.weights.alpha = parse(key, value)?,
            "lambda_fastemit" => tr.weights.lambda_fastemit = parse(key, value)?,
            "chunked_batch_fraction" => tr.policy.chunked_batch_fraction = parse(key, value)?,
            "chunk_ms_min" => tr.policy.chunk_ms_min = parse(key, value)?,
            "chunk_ms_max" => tr.policy.chunk_ms_max = parse(key, value)?,
            "frame_ms" => tr.policy.frame_ms = parse(key, value)?,
            "optimizer" => {
                tr.optimizer.kind = match value {
                    "sgd" => OptimizerKind::Sgd,
                    "adam" => OptimizerKind::Adam,
                    _ => return Err(CliError::Config(format!("optimizer must be sgd or adam, got {value:?}"))),
                }
            }
            "learning_rate" => tr.optimizer.learning_rate = parse(key, value)?,
            "weight_decay" => tr.optimizer.weight_decay = parse(key, value)?,
            "max_grad_norm" => {
                tr.optimizer.max_grad_norm = match value {
                    "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "batch_size" => tr.batch_size = parse(key, value)?,
            "steps" => tr.steps = parse(key, value)?,
            "seed" => tr.seed = parse(key, value)?,
            "frozen_prefixes" => {
                tr.frozen_prefixes = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            }
            "threads" => self.threads = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            _ => return Err(CliError::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let enc = &self.model.encoder;
        let ctx = &self.model.context;
        let tr = &self.train;
        Some(match key {
            "feat_dim" => show(enc.feat_dim),
            "encoder_layers" => show(enc.num_layers),
            "d_model" => show(enc.d_model),
            "encoder_heads" => show(enc.num_heads),
            "encoder_ffn_dim" => show(enc.ffn_dim),
            "conv_kernel" => show(enc.conv_kernel),
            "max_positions" => show(enc.max_positions),
            "context_layers" => show(ctx.num_decoder_layers),
            "teacher_dim" => show(ctx.teacher_dim),
            "context_window" => format_left_context(ctx.window),
            "context_heads" => show(ctx.num_heads),
            "context_ffn_dim" => show(ctx.ffn_dim),
            "pred_dim" => show(self.model.pred_dim),
            "joint_dim" => show(self.model.joint_dim),
            "alpha" => show(tr.weights.alpha),
            "lambda_fastemit" => show(tr.weights.lambda_fastemit),
            "chunked_batch_fraction" => show(tr.policy.chunked_batch_fraction),
            "chunk_ms_min" => show(tr.policy.chunk_ms_min),
            "chunk_ms_max" => show(tr.policy.chunk_ms_max),
            "frame_ms" => show(tr.policy.frame_ms),
            "optimizer" => match tr.optimizer.kind {
                OptimizerKind::Sgd => "sgd".into(),
                OptimizerKind::Adam => "adam".into(),
            },
            "learning_rate" => show(tr.optimizer.learning_rate),
            "weight_decay" => show(tr.optimizer.weight_decay),
            "max_grad_norm" => tr.optimizer.max_grad_norm.map_or("none".into(), show),
            "batch_size" => show(tr.batch_size),
            "steps" => show(tr.steps),
            "seed" => show(tr.seed),
            "frozen_prefixes" => tr.frozen_prefixes.join(","),
            "threads" => show(self.threads),
            "checkpoint_every" => show(self.checkpoint_every),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("config line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| CliError::Config(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&read_to_string(path)?)
    }

    /// Every key with its current value; parses back to an equal config.
    pub fn to_text(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    /// Applies `key=value` overrides such as those given with `--set`.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override {o:?} must be key=value")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Model configuration for a vocabulary of `vocab_size` symbols.
    pub fn model_for(&self, vocab_size: usize) -> Result<ModelConfig> {
        let model = ModelConfig {
            vocab_size,
            ..self.model.clone()
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.encoder.validate()?;
        self.model.context.validate()?;
        self.train.weights.validate()?;
        self.train.policy.validate()?;
        self.train.optimizer.validate()?;
        if self.train.batch_size == 0 || self.threads == 0 {
            return Err(CliError::Config("batch_size and threads must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.set("context_window", "3").unwrap();
        c.set("max_grad_norm", "none").unwrap();
        c.set("frozen_prefixes", "encoder., joint.").unwrap();
        c.set("optimizer", "adam").unwrap();
        let back = RunConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(RunConfig::from_text(&published_config(80).to_text()).unwrap(), published_config(80));
    }

    #[test]
    fn comments_blank_lines_and_overrides() {
        let mut c = RunConfig::from_text("# desk run\n\nsteps = 10  # short\nalpha=0\n").unwrap();
        assert_eq!((c.train.steps, c.train.weights.alpha), (10, 0.0));
        c.apply_overrides(&["steps=20".into()]).unwrap();
        assert_eq!(c.train.steps, 20);
    }

    #[test]
    fn errors_name_the_line() {
        let e = RunConfig::from_text("steps = 1\nbogus = 2\n").unwrap_err();
        assert_eq!(e.category(), "config");
        assert!(e.to_string().contains("line 2"));
        assert!(RunConfig::from_text("steps = many\n").is_err());
        assert!(RunConfig::from_text("steps 3\n").is_err());
    }

    #[test]
    fn every_key_is_readable() {
        let c = RunConfig::default();
        for k in RunConfig::KEYS {
            assert!(c.get(k).is_some(), "{k}");
        }
    }
}
