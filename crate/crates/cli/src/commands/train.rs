use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use sens_asr_core::distillation::{HashTeacher, TeacherProvider};
use sens_asr_core::model::SensModel;
use sens_asr_core::train::Trainer;

use super::{config_path_for, emit};
use crate::binio::{load_checkpoint, save_checkpoint};
use crate::config::RunConfig;
use crate::data::{build_examples, load_vocabulary};
use crate::error::{write_bytes, CliError, Result};
use crate::manifest::load_training;
use crate::teacher::FileTeacher;
use crate::training::train_loop;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training manifest: id, speaker, feature file, transcript.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Vocabulary, one symbol per line, blank first.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Checkpoint to write; the run configuration goes to `<out>.conf`.
    #[arg(long)]
    pub out: PathBuf,
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Configuration override `key=value`, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Teacher embedding file keyed by utterance id.
    #[arg(long, conflicts_with = "hash_teacher")]
    pub teacher: Option<PathBuf>,
    /// Use the deterministic hash teacher instead of a file.
    #[arg(long)]
    pub hash_teacher: bool,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Write step logs here instead of stdout.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Seed for initialization, batching and chunk sampling.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn open_log(path: &Path) -> Result<Box<dyn Write>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let f = File::create(path).map_err(CliError::io(path))?;
    Ok(Box::new(BufWriter::new(f)))
}

pub fn run(args: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config.apply_overrides(&args.overrides)?;
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    config.validate()?;

    let vocab = load_vocabulary(&args.vocab)?;
    let model_config = config.model_for(vocab.len())?;
    let teacher_dim = model_config.context.teacher_dim;
    let file_teacher;
    let hash_teacher;
    let teacher: Option<&dyn TeacherProvider> = if let Some(p) = &args.teacher {
        file_teacher = FileTeacher::load(p)?;
        Some(&file_teacher)
    } else if args.hash_teacher {
        hash_teacher = HashTeacher::new(teacher_dim)?;
        Some(&hash_teacher)
    } else {
        None
    };
    if teacher.is_none() && config.train.weights.alpha > 0.0 {
        return Err(CliError::Config(
            "alpha > 0 needs teacher embeddings (--teacher or --hash-teacher)".into(),
        ));
    }

    let records = load_training(&args.manifest)?;
    let examples = build_examples(
        &records,
        &vocab,
        model_config.encoder.feat_dim,
        teacher.map(|t| (t, teacher_dim)),
    )?;
    let (model, mut params) = match &args.init {
        Some(p) => SensModel::from_tensors(&model_config, load_checkpoint(p)?)?,
        None => SensModel::new(&model_config, config.train.seed)?,
    };
    write_bytes(&config_path_for(&args.out), config.to_text().as_bytes())?;

    let mut log_file = args.log.as_deref().map(open_log).transpose()?;
    let every = config.checkpoint_every;
    let mut trainer = Trainer::new(config.train.clone(), &params, examples.len())?;
    train_loop(
        &mut trainer,
        &model,
        &mut params,
        &examples,
        config.threads,
        |log, params| {
            let line = format!("{}\n", log.line());
            match log_file.as_mut() {
                Some(f) => f
                    .write_all(line.as_bytes())
                    .map_err(CliError::io(args.log.as_deref().unwrap_or(Path::new(""))))?,
                None => emit(out, &line)?,
            }
            if every > 0 && log.step % every == 0 {
                save_checkpoint(&args.out, params)?;
            }
            Ok(true)
        },
    )?;
    if let (Some(f), Some(p)) = (log_file.as_mut(), args.log.as_deref()) {
        f.flush().map_err(CliError::io(p))?;
    }
    save_checkpoint(&args.out, &params)
}
