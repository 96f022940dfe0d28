use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use sens_asr_core::pair_builder::{
    build_triplets, filter_candidates, select_paraphrase, ParaphraseCandidate, SimilarityScorer,
    TokenF1Scorer, Triplet, Utterance,
};
use sens_asr_core::rng::{seeded, Rng};

use super::emit_to;
use crate::error::{read_to_string, Result};
use crate::manifest::{format_triplets, parse_candidates, parse_corpus};

#[derive(Debug, Args)]
pub struct BuildPairsArgs {
    /// Corpus: `utterance_id<TAB>speaker_id<TAB>text`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Paraphrase candidates: `original_id<TAB>text`.
    #[arg(long)]
    pub candidates: PathBuf,
    /// Triplet output; stdout by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Filters each utterance's candidates, picks one survivor at random and
/// builds the triplet set. Utterances are visited in corpus order.
pub fn build_pairs<S: SimilarityScorer + ?Sized>(
    corpus: &[Utterance],
    candidates: &[ParaphraseCandidate],
    scorer: &S,
    rng: &mut Rng,
) -> sens_asr_core::Result<Vec<Triplet>> {
    let mut by_id: BTreeMap<&str, Vec<ParaphraseCandidate>> = BTreeMap::new();
    for c in candidates {
        by_id.entry(c.original_id.as_str()).or_default().push(c.clone());
    }
    let mut chosen = BTreeMap::new();
    for u in corpus {
        let Some(cands) = by_id.get(u.id.as_str()) else {
            continue;
        };
        let kept = filter_candidates(u, cands, scorer);
        if let Some(p) = select_paraphrase(&kept, rng) {
            chosen.insert(u.id.clone(), p.text);
        }
    }
    build_triplets(corpus, &chosen, rng)
}

pub fn run(args: BuildPairsArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = parse_corpus(&read_to_string(&args.corpus)?)?;
    let candidates = parse_candidates(&read_to_string(&args.candidates)?)?;
    let triplets = build_pairs(&corpus, &candidates, &TokenF1Scorer, &mut seeded(args.seed))?;
    emit_to(args.out.as_deref(), out, &format_triplets(&triplets))
}
