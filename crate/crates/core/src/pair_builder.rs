//! Sentence-pair dataset for fine-tuning the teacher: paraphrase filtering
//! and labeled triplets with speaker-disjoint negatives.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::rng::Rng;
use crate::{Error, Result};

/// Minimum similarity a paraphrase must reach.
pub const MIN_SIMILARITY: f64 = 0.5;
/// Candidates this many times longer than the original (or more) are dropped.
pub const MAX_LENGTH_RATIO: usize = 2;
pub const POSITIVE_LABELS: (f64, f64) = (0.8, 1.0);
pub const NEGATIVE_LABELS: (f64, f64) = (-0.2, 0.2);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParaphraseCandidate {
    pub original_id: String,
    pub text: String,
}

/// Semantic similarity in `[−1, 1]`.
pub trait SimilarityScorer {
    fn score(&self, a: &str, b: &str) -> f64;
}

/// F1 of the whitespace-token multisets of both texts.
#[derive(Clone, Copy, Debug, Default)]
pub struct TokenF1Scorer;

impl SimilarityScorer for TokenF1Scorer {
    fn score(&self, a: &str, b: &str) -> f64 {
        let ta: Vec<&str> = a.split_whitespace().collect();
        let tb: Vec<&str> = b.split_whitespace().collect();
        if ta.is_empty() && tb.is_empty() {
            return 1.0;
        }
        let mut counts: BTreeMap<&str, isize> = BTreeMap::new();
        for t in &ta {
            *counts.entry(t).or_default() += 1;
        }
        let mut overlap = 0usize;
        for t in &tb {
            if let Some(c) = counts.get_mut(t) {
                if *c > 0 {
                    *c -= 1;
                    overlap += 1;
                }
            }
        }
        2.0 * overlap as f64 / (ta.len() + tb.len()) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Triplet {
    pub sentence_a: String,
    pub sentence_b: String,
    pub label: f64,
}

impl Triplet {
    pub fn is_positive(&self) -> bool {
        self.label >= POSITIVE_LABELS.0
    }
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Keeps candidates scoring at least 0.5 and strictly shorter than twice
/// the original (in characters); order is preserved.
pub fn filter_candidates<S: SimilarityScorer + ?Sized>(
    original: &Utterance,
    candidates: &[ParaphraseCandidate],
    scorer: &S,
) -> Vec<ParaphraseCandidate> {
    let limit = MAX_LENGTH_RATIO * char_len(&original.text);
    candidates
        .iter()
        .filter(|c| {
            char_len(&c.text) < limit && scorer.score(&original.text, &c.text) >= MIN_SIMILARITY
        })
        .cloned()
        .collect()
}

/// Uniform choice among surviving candidates.
pub fn select_paraphrase(
    filtered: &[ParaphraseCandidate],
    rng: &mut Rng,
) -> Option<ParaphraseCandidate> {
    filtered.choose(rng).cloned()
}

/// Positives pair each utterance with its paraphrase; `⌊positives/2⌋`
/// negatives pair a random utterance with the transcription or paraphrase of
/// an utterance by another speaker. Output order is shuffled.
pub fn build_triplets(
    corpus: &[Utterance],
    paraphrases: &BTreeMap<String, String>,
    rng: &mut Rng,
) -> Result<Vec<Triplet>> {
    let speakers: BTreeSet<&str> = corpus.iter().map(|u| u.speaker.as_str()).collect();
    if speakers.len() < 2 {
        return Err(Error::Corpus(
            "negative pairs need utterances from at least two speakers".into(),
        ));
    }
    let mut ids = BTreeSet::new();
    for u in corpus {
        if u.text.trim().is_empty() || !ids.insert(u.id.as_str()) {
            return Err(Error::Corpus(alloc::format!(
                "utterance {} is empty or duplicated",
                u.id
            )));
        }
    }
    let mut out = Vec::new();
    for u in corpus {
        if let Some(p) = paraphrases.get(&u.id) {
            out.push(Triplet {
                sentence_a: u.text.clone(),
                sentence_b: p.clone(),
                label: rng.gen_range(POSITIVE_LABELS.0..=POSITIVE_LABELS.1),
            });
        }
    }
    let negatives = out.len() / 2;
    for _ in 0..negatives {
        let anchor = &corpus[rng.gen_range(0..corpus.len())];
        let others: Vec<&Utterance> = corpus
            .iter()
            .filter(|o| o.speaker != anchor.speaker)
            .collect();
        let other = others[rng.gen_range(0..others.len())];
        let use_paraphrase = rng.gen_bool(0.5);
        let sentence_b = match paraphrases.get(&other.id) {
            Some(p) if use_paraphrase => p.clone(),
            _ => other.text.clone(),
        };
        out.push(Triplet {
            sentence_a: anchor.text.clone(),
            sentence_b,
            label: rng.gen_range(NEGATIVE_LABELS.0..=NEGATIVE_LABELS.1),
        });
    }
    out.shuffle(rng);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use alloc::string::ToString;
    use alloc::vec;

    fn utt(id: &str, spk: &str, text: &str) -> Utterance {
        Utterance {
            id: id.into(),
            speaker: spk.into(),
            text: text.into(),
        }
    }

    fn cand(text: &str) -> ParaphraseCandidate {
        ParaphraseCandidate {
            original_id: "u".into(),
            text: text.into(),
        }
    }

    #[test]
    fn filter_rules() {
        let orig = utt("u", "s", "abcd ef");
        let out = filter_candidates(
            &orig,
            &[
                cand("abcd ef"),
                cand("zz yy"),
                cand("abcd ef abcdef"),
                cand("abcd ef abcde"),
            ],
            &TokenF1Scorer,
        );
        // 14 characters is exactly twice the original and is dropped; 13 stays.
        assert_eq!(out, vec![cand("abcd ef"), cand("abcd ef abcde")]);
        assert_eq!(filter_candidates(&orig, &out, &TokenF1Scorer), out);
    }

    #[test]
    fn low_score_is_dropped() {
        struct Fixed(f64);
        impl SimilarityScorer for Fixed {
            fn score(&self, _: &str, _: &str) -> f64 {
                self.0
            }
        }
        let orig = utt("u", "s", "hello there");
        assert!(filter_candidates(&orig, &[cand("hi")], &Fixed(0.4)).is_empty());
        assert_eq!(
            filter_candidates(&orig, &[cand("hi")], &Fixed(0.5)).len(),
            1
        );
    }

    #[test]
    fn selection_is_uniform() {
        let mut rng = seeded(5);
        assert_eq!(select_paraphrase(&[], &mut rng), None);
        let one = [cand("x")];
        assert_eq!(select_paraphrase(&one, &mut rng), Some(cand("x")));
        let four: Vec<_> = ["a", "b", "c", "d"].iter().map(|t| cand(t)).collect();
        let mut hits = [0usize; 4];
        for _ in 0..10_000 {
            let c = select_paraphrase(&four, &mut rng).unwrap();
            hits[four.iter().position(|f| *f == c).unwrap()] += 1;
        }
        assert!(hits
            .iter()
            .all(|&h| (h as f64 / 10_000.0 - 0.25).abs() <= 0.02));
    }

    #[test]
    fn three_speakers_three_positives_one_negative() {
        let corpus = vec![
            utt("1", "a", "one"),
            utt("2", "b", "two"),
            utt("3", "c", "three"),
        ];
        let para: BTreeMap<String, String> = corpus
            .iter()
            .map(|u| (u.id.clone(), u.text.to_string() + "!"))
            .collect();
        let out = build_triplets(&corpus, &para, &mut seeded(1)).unwrap();
        assert_eq!(out.iter().filter(|t| t.is_positive()).count(), 3);
        assert_eq!(out.len(), 4);
        let speaker_of = |s: &str| {
            corpus
                .iter()
                .find(|u| u.text == s || u.text.clone() + "!" == s)
                .unwrap()
                .speaker
                .clone()
        };
        for t in out.iter().filter(|t| !t.is_positive()) {
            assert_ne!(speaker_of(&t.sentence_a), speaker_of(&t.sentence_b));
            assert!(t.label >= -0.2 && t.label <= 0.2);
        }
        assert_eq!(out, build_triplets(&corpus, &para, &mut seeded(1)).unwrap());
    }

    #[test]
    fn single_speaker_is_rejected() {
        let corpus = vec![utt("1", "a", "one"), utt("2", "a", "two")];
        assert!(matches!(
            build_triplets(&corpus, &BTreeMap::new(), &mut seeded(0)),
            Err(Error::Corpus(_))
        ));
    }
}
