//! Turns manifests, feature files and teacher embeddings into training
//! examples.

use std::path::Path;

use sens_asr_core::distillation::TeacherProvider;
use sens_asr_core::train::Example;
use sens_asr_core::transducer::Vocabulary;
use sens_asr_core::Tensor;

use crate::binio::load_features;
use crate::error::{read_to_string, CliError, Result};
use crate::manifest::TrainingRecord;

pub fn load_vocabulary(path: &Path) -> Result<Vocabulary> {
    Ok(Vocabulary::from_lines(read_to_string(path)?.trim_end_matches('\n'))?)
}

/// Feature matrix of `record`, checked against the declared dimension.
pub fn load_record_features(record: &TrainingRecord, feat_dim: usize) -> Result<Tensor<f32>> {
    let features = load_features(&record.features)?;
    if features.shape()[1] != feat_dim {
        return Err(CliError::format(format!(
            "{}: feature dimension {} does not match configured {feat_dim}",
            record.features.display(),
            features.shape()[1]
        )));
    }
    Ok(features)
}

/// One example per record. Teacher embeddings are attached only when a
/// provider is given; its dimension must match `teacher_dim`.
pub fn build_examples(
    records: &[TrainingRecord],
    vocab: &Vocabulary,
    feat_dim: usize,
    teacher: Option<(&dyn TeacherProvider, usize)>,
) -> Result<Vec<Example>> {
    if let Some((provider, dim)) = teacher {
        if provider.dim() != dim {
            return Err(CliError::Config(format!(
                "teacher embeddings have {} dimensions, teacher_dim is {dim}",
                provider.dim()
            )));
        }
    }
    records
        .iter()
        .map(|r| {
            let targets = vocab.encode(&r.transcript)?;
            let teacher = match teacher {
                Some((provider, dim)) => Some(Tensor::new(
                    &[dim],
                    provider.embed(&r.id, &r.transcript)?,
                )?),
                None => None,
            };
            Ok(Example {
                id: r.id.clone(),
                features: load_record_features(r, feat_dim)?,
                targets,
                teacher,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binio::save_features;
    use sens_asr_core::distillation::HashTeacher;

    #[test]
    fn examples_carry_targets_and_teacher() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.feat");
        save_features(&path, &Tensor::zeros(&[8, 3])).unwrap();
        let vocab = Vocabulary::with_blank("<b>", &["x", "y"]).unwrap();
        let rec = TrainingRecord {
            id: "a".into(),
            speaker: "s".into(),
            features: path,
            transcript: "y x".into(),
        };
        let teacher = HashTeacher::new(4).unwrap();
        let ex = build_examples(std::slice::from_ref(&rec), &vocab, 3, Some((&teacher, 4))).unwrap();
        assert_eq!(ex[0].targets, vec![2, 1]);
        assert_eq!(ex[0].teacher.as_ref().unwrap().len(), 4);
        assert!(build_examples(std::slice::from_ref(&rec), &vocab, 5, None).is_err());
        assert!(build_examples(&[rec], &vocab, 3, Some((&teacher, 5))).is_err());
    }
}
