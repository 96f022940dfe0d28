use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use sens_asr_core::distillation::{HashTeacher, TeacherProvider};
use sens_asr_core::pair_builder::Utterance;
use sens_asr_core::synth::{synth_dataset, SynthSpec};

use super::emit;
use crate::binio::save_features;
use crate::error::{write_bytes, Result};
use crate::manifest::{format_candidates, format_corpus, format_training, TrainingRecord};
use crate::teacher::FileTeacher;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub utterances: usize,
    #[arg(long, default_value_t = 5)]
    pub speakers: usize,
    #[arg(long, default_value_t = 8)]
    pub feat_dim: usize,
    /// Half-width of the uniform feature noise.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f32,
    /// Dimension of the hash-teacher embeddings written to teacher.tsv.
    #[arg(long, default_value_t = 16)]
    pub teacher_dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Files written by `synth-data`, relative to the output directory.
pub const FILES: [&str; 6] = [
    "train.tsv",
    "transcripts.tsv",
    "corpus.tsv",
    "candidates.tsv",
    "vocab.txt",
    "teacher.tsv",
];

pub fn run(args: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let spec = SynthSpec {
        utterances: args.utterances,
        speakers: args.speakers,
        feat_dim: args.feat_dim,
        noise: args.noise,
        seed: args.seed,
        ..SynthSpec::default()
    };
    let ds = synth_dataset(&spec)?;
    let hash = HashTeacher::new(args.teacher_dim)?;
    let mut teacher = FileTeacher::new(args.teacher_dim)?;
    let mut records = Vec::with_capacity(ds.utterances.len());
    let mut transcripts = String::new();
    let mut corpus = Vec::with_capacity(ds.utterances.len());
    for u in &ds.utterances {
        let features = args.out.join("feats").join(format!("{}.feat", u.id));
        save_features(&features, &u.features)?;
        teacher.insert(&u.id, hash.embed(&u.id, &u.text)?)?;
        transcripts.push_str(&format!("{}\t{}\n", u.id, u.text));
        records.push(TrainingRecord {
            id: u.id.clone(),
            speaker: u.speaker.clone(),
            features,
            transcript: u.text.clone(),
        });
        corpus.push(Utterance {
            id: u.id.clone(),
            speaker: u.speaker.clone(),
            text: u.text.clone(),
        });
    }
    let dir = &args.out;
    write_bytes(&dir.join(FILES[0]), format_training(&records, dir).as_bytes())?;
    write_bytes(&dir.join(FILES[1]), transcripts.as_bytes())?;
    write_bytes(&dir.join(FILES[2]), format_corpus(&corpus).as_bytes())?;
    write_bytes(&dir.join(FILES[3]), format_candidates(&ds.candidates).as_bytes())?;
    write_bytes(&dir.join(FILES[4]), ds.vocabulary.to_lines().as_bytes())?;
    teacher.save(&dir.join(FILES[5]))?;
    emit(
        out,
        &format!("wrote {} utterances to {}\n", records.len(), dir.display()),
    )
}
