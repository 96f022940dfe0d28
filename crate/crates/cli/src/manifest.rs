//! Tab-separated text manifests. Blank lines are skipped; every other line
//! must carry exactly the expected number of fields.

use std::path::{Path, PathBuf};

use sens_asr_core::pair_builder::{ParaphraseCandidate, Triplet, Utterance};

use crate::error::{read_to_string, CliError, Result};

/// One training utterance: `id<TAB>speaker<TAB>features<TAB>transcript`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingRecord {
    pub id: String,
    pub speaker: String,
    /// Feature file, resolved against the manifest's directory when relative.
    pub features: PathBuf,
    pub transcript: String,
}

fn records(text: &str, fields: usize, what: &str) -> Result<Vec<Vec<String>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let parts: Vec<String> = line.splitn(fields, '\t').map(str::to_string).collect();
            if parts.len() != fields || parts[..fields - 1].iter().any(|p| p.is_empty()) {
                return Err(CliError::format(format!(
                    "{what} line {}: expected {fields} tab-separated fields",
                    i + 1
                )));
            }
            Ok(parts)
        })
        .collect()
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn parse_training(text: &str, base: &Path) -> Result<Vec<TrainingRecord>> {
    records(text, 4, "manifest")?
        .into_iter()
        .map(|mut p| {
            let transcript = p.pop().expect("4 fields");
            let path = PathBuf::from(p.pop().expect("4 fields"));
            Ok(TrainingRecord {
                features: if path.is_absolute() { path } else { base.join(path) },
                transcript,
                speaker: p.pop().expect("4 fields"),
                id: p.pop().expect("4 fields"),
            })
        })
        .collect()
}

pub fn load_training(path: &Path) -> Result<Vec<TrainingRecord>> {
    parse_training(&read_to_string(path)?, &base_dir(path))
}

/// Writes records with feature paths relative to `base` where possible.
pub fn format_training(records: &[TrainingRecord], base: &Path) -> String {
    records
        .iter()
        .map(|r| {
            let path = r.features.strip_prefix(base).unwrap_or(&r.features);
            format!("{}\t{}\t{}\t{}\n", r.id, r.speaker, path.display(), r.transcript)
        })
        .collect()
}

/// `id<TAB>speaker<TAB>text`.
pub fn parse_corpus(text: &str) -> Result<Vec<Utterance>> {
    records(text, 3, "corpus")?
        .into_iter()
        .map(|mut p| {
            Ok(Utterance {
                text: p.pop().expect("3 fields"),
                speaker: p.pop().expect("3 fields"),
                id: p.pop().expect("3 fields"),
            })
        })
        .collect()
}

pub fn format_corpus(corpus: &[Utterance]) -> String {
    corpus
        .iter()
        .map(|u| format!("{}\t{}\t{}\n", u.id, u.speaker, u.text))
        .collect()
}

/// `original_id<TAB>candidate_text`, several lines per id.
pub fn parse_candidates(text: &str) -> Result<Vec<ParaphraseCandidate>> {
    records(text, 2, "candidates")?
        .into_iter()
        .map(|mut p| {
            Ok(ParaphraseCandidate {
                text: p.pop().expect("2 fields"),
                original_id: p.pop().expect("2 fields"),
            })
        })
        .collect()
}

pub fn format_candidates(candidates: &[ParaphraseCandidate]) -> String {
    candidates
        .iter()
        .map(|c| format!("{}\t{}\n", c.original_id, c.text))
        .collect()
}

/// `sentence_a<TAB>sentence_b<TAB>label` with six decimals.
pub fn format_triplets(triplets: &[Triplet]) -> String {
    triplets
        .iter()
        .map(|t| format!("{}\t{}\t{:.6}\n", t.sentence_a, t.sentence_b, t.label))
        .collect()
}

pub fn parse_triplets(text: &str) -> Result<Vec<Triplet>> {
    records(text, 3, "triplets")?
        .into_iter()
        .enumerate()
        .map(|(i, mut p)| {
            let label = p
                .pop()
                .expect("3 fields")
                .trim()
                .parse()
                .map_err(|_| CliError::format(format!("triplet {}: label is not a number", i + 1)))?;
            Ok(Triplet {
                sentence_b: p.pop().expect("3 fields"),
                sentence_a: p.pop().expect("3 fields"),
                label,
            })
        })
        .collect()
}

/// `id<TAB>text`; the text may be empty.
pub fn parse_transcripts(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let (id, words) = line.split_once('\t').unwrap_or((line, ""));
            if id.is_empty() {
                return Err(CliError::format(format!("transcript line {}: empty id", i + 1)));
            }
            Ok((id.to_string(), words.to_string()))
        })
        .collect()
}

pub fn load_transcripts(path: &Path) -> Result<Vec<(String, String)>> {
    parse_transcripts(&read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_paths_resolve_against_manifest() {
        let recs = parse_training("u1\ts0\tfeats/u1.feat\tcat sees fish\n\n", Path::new("/data")).unwrap();
        assert_eq!(recs[0].features, PathBuf::from("/data/feats/u1.feat"));
        assert_eq!(format_training(&recs, Path::new("/data")), "u1\ts0\tfeats/u1.feat\tcat sees fish\n");
        assert!(parse_training("u1\ts0\tx.feat\n", Path::new("")).is_err());
    }

    #[test]
    fn corpus_and_candidates_round_trip() {
        let text = "u1\tspk0\tcat sees fish\nu2\tspk1\tdog likes bone\n";
        let c = parse_corpus(text).unwrap();
        assert_eq!(c[1].speaker, "spk1");
        assert_eq!(format_corpus(&c), text);
        let cands = parse_candidates("u1\tkitten sees fish\nu1\tcat spots fish\n").unwrap();
        assert_eq!(cands.len(), 2);
        assert_eq!(format_candidates(&cands), "u1\tkitten sees fish\nu1\tcat spots fish\n");
        assert!(parse_corpus("u1\t\tx\n").is_err());
    }

    #[test]
    fn triplets_print_six_decimals() {
        let t = Triplet {
            sentence_a: "a".into(),
            sentence_b: "b".into(),
            label: 0.85,
        };
        let text = format_triplets(&[t]);
        assert_eq!(text, "a\tb\t0.850000\n");
        assert_eq!(parse_triplets(&text).unwrap()[0].label, 0.85);
    }

    #[test]
    fn transcripts_allow_empty_text() {
        let t = parse_transcripts("u1\t\nu2\tcat\nu3\n").unwrap();
        assert_eq!(t[0], ("u1".into(), String::new()));
        assert_eq!(t[2], ("u3".into(), String::new()));
    }
}
