//! Synthetic toy corpus: a ten-word grammar rendered as per-word feature
//! templates with silence gaps and seeded noise.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng as _;

use crate::pair_builder::ParaphraseCandidate;
use crate::rng::{derived, fnv1a64, seeded};
use crate::transducer::Vocabulary;
use crate::{Error, Result, Tensor};

pub const SUBJECTS: [&str; 3] = ["cat", "dog", "bird"];
pub const VERBS: [&str; 3] = ["sees", "likes", "hears"];
/// Preferred object of each subject, in [`SUBJECTS`] order.
pub const OBJECTS: [&str; 3] = ["fish", "bone", "seed"];
pub const ADVERB: &str = "now";
pub const BLANK_SYMBOL: &str = "<blank>";

const SYNONYMS: [(&str, &str); 10] = [
    ("cat", "kitten"),
    ("dog", "puppy"),
    ("bird", "sparrow"),
    ("sees", "spots"),
    ("likes", "enjoys"),
    ("hears", "notices"),
    ("fish", "salmon"),
    ("bone", "biscuit"),
    ("seed", "grain"),
    ("now", "today"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub utterances: usize,
    pub speakers: usize,
    pub feat_dim: usize,
    /// Raw frames per spoken word.
    pub frames_per_word: usize,
    /// Raw silence frames before, between and after words.
    pub gap_frames: usize,
    /// Half-width of the uniform noise added to every value.
    pub noise: f32,
    /// Probability that the object follows its subject's preference.
    pub correlation: f64,
    /// Probability of a trailing adverb.
    pub adverb_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            utterances: 200,
            speakers: 5,
            feat_dim: 8,
            frames_per_word: 8,
            gap_frames: 4,
            noise: 0.1,
            correlation: 0.8,
            adverb_rate: 0.3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthUtterance {
    pub id: String,
    pub speaker: String,
    pub text: String,
    pub features: Tensor<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub vocabulary: Vocabulary,
    pub utterances: Vec<SynthUtterance>,
    /// Paraphrase candidates: synonym rewrites plus over-long and unrelated decoys.
    pub candidates: Vec<ParaphraseCandidate>,
}

/// The grammar's vocabulary, blank first.
pub fn vocabulary() -> Vocabulary {
    let mut words: Vec<&str> = Vec::new();
    words.extend(SUBJECTS);
    words.extend(VERBS);
    words.extend(OBJECTS);
    words.push(ADVERB);
    Vocabulary::with_blank(BLANK_SYMBOL, &words).expect("static vocabulary")
}

/// Feature template of `word`: `[frames×dim]`, seeded only by the word.
pub fn word_template(word: &str, frames: usize, dim: usize) -> Vec<f32> {
    let mut rng = seeded(fnv1a64(word.as_bytes()));
    (0..frames * dim)
        .map(|_| rng.gen_range(-1.0f32..1.0))
        .collect()
}

fn synonym(word: &str) -> &str {
    SYNONYMS
        .iter()
        .find(|(w, _)| *w == word)
        .map_or(word, |(_, s)| *s)
}

/// Candidate rewrites of `text`: one synonym swap per position, a two-word
/// swap, a doubled sentence and an unrelated sentence.
pub fn paraphrase_candidates(id: &str, text: &str) -> Vec<ParaphraseCandidate> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut out = Vec::new();
    let mut push = |t: String| {
        out.push(ParaphraseCandidate {
            original_id: id.to_string(),
            text: t,
        })
    };
    for i in 0..words.len() {
        let mut w = words.clone();
        w[i] = synonym(w[i]);
        push(w.join(" "));
    }
    if words.len() >= 2 {
        let mut w = words.clone();
        w[0] = synonym(w[0]);
        w[1] = synonym(w[1]);
        push(w.join(" "));
    }
    push(alloc::format!("{text} and then once again {text}"));
    push("the weather is pleasant".to_string());
    out
}

/// Generates the corpus; identical specs yield identical datasets.
pub fn synth_dataset(spec: &SynthSpec) -> Result<SynthDataset> {
    if spec.utterances == 0 || spec.speakers == 0 || spec.feat_dim == 0 || spec.frames_per_word == 0
    {
        return Err(Error::Parameter(
            "synthetic corpus sizes must be positive".into(),
        ));
    }
    if spec.noise.is_nan()
        || spec.noise < 0.0
        || !(0.0..=1.0).contains(&spec.correlation)
        || !(0.0..=1.0).contains(&spec.adverb_rate)
    {
        return Err(Error::Parameter(
            "invalid noise, correlation or adverb rate".into(),
        ));
    }
    let vocabulary = vocabulary();
    let mut text_rng = derived(spec.seed, 0);
    let mut utterances = Vec::with_capacity(spec.utterances);
    let mut candidates = Vec::new();
    for i in 0..spec.utterances {
        let s = text_rng.gen_range(0..SUBJECTS.len());
        let v = text_rng.gen_range(0..VERBS.len());
        let o = if text_rng.gen_bool(spec.correlation) {
            s
        } else {
            text_rng.gen_range(0..OBJECTS.len())
        };
        let mut words = alloc::vec![SUBJECTS[s], VERBS[v], OBJECTS[o]];
        if text_rng.gen_bool(spec.adverb_rate) {
            words.push(ADVERB);
        }
        let text = words.join(" ");

        let (fw, gap, dim) = (spec.frames_per_word, spec.gap_frames, spec.feat_dim);
        let rows = gap + words.len() * (fw + gap);
        let mut data = alloc::vec![0.0f32; rows * dim];
        for (k, w) in words.iter().enumerate() {
            let start = (gap + k * (fw + gap)) * dim;
            data[start..start + fw * dim].copy_from_slice(&word_template(w, fw, dim));
        }
        if spec.noise > 0.0 {
            let mut noise_rng = derived(spec.seed, 1 + i as u64);
            for v in &mut data {
                *v += noise_rng.gen_range(-spec.noise..=spec.noise);
            }
        }
        let id = alloc::format!("utt{i:04}");
        candidates.extend(paraphrase_candidates(&id, &text));
        utterances.push(SynthUtterance {
            id,
            speaker: alloc::format!("spk{}", i % spec.speakers),
            text,
            features: Tensor::new(&[rows, dim], data)?,
        });
    }
    Ok(SynthDataset {
        vocabulary,
        utterances,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_robin_speakers() {
        let ds = synth_dataset(&SynthSpec {
            utterances: 100,
            ..SynthSpec::default()
        })
        .unwrap();
        for k in 0..5 {
            let s = alloc::format!("spk{k}");
            assert_eq!(ds.utterances.iter().filter(|u| u.speaker == s).count(), 20);
        }
        assert!(ds.vocabulary.len() <= 12);
    }

    #[test]
    fn noiseless_features_are_templates() {
        let spec = SynthSpec {
            utterances: 3,
            noise: 0.0,
            ..SynthSpec::default()
        };
        let ds = synth_dataset(&spec).unwrap();
        let u = &ds.utterances[0];
        let first = u.text.split_whitespace().next().unwrap();
        let (g, d) = (spec.gap_frames, spec.feat_dim);
        assert_eq!(
            &u.features.data()[g * d..(g + spec.frames_per_word) * d],
            &word_template(first, spec.frames_per_word, d)[..]
        );
        assert!(u.features.data()[..g * d].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_dataset() {
        let spec = SynthSpec {
            utterances: 10,
            seed: 42,
            ..SynthSpec::default()
        };
        assert_eq!(synth_dataset(&spec).unwrap(), synth_dataset(&spec).unwrap());
        let other = SynthSpec {
            seed: 43,
            ..spec.clone()
        };
        assert_ne!(
            synth_dataset(&spec).unwrap(),
            synth_dataset(&other).unwrap()
        );
    }

    #[test]
    fn transcripts_encode() {
        let ds = synth_dataset(&SynthSpec::default()).unwrap();
        for u in &ds.utterances {
            ds.vocabulary.encode(&u.text).unwrap();
        }
    }
}
