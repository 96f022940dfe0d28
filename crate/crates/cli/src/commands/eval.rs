use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use sens_asr_core::eval::{
    bootstrap_ci, corpus_wer, format_breakdown, format_table_cell, CorpusReport, DEFAULT_RESAMPLES,
};
use sens_asr_core::Error as CoreError;

use super::emit_to;
use crate::error::Result;
use crate::manifest::load_transcripts;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Reference transcripts, `utterance_id<TAB>text`.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Hypothesis transcripts of the system under test.
    #[arg(long)]
    pub hyp: PathBuf,
    /// Hypotheses of a baseline system for deltas.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Lowercase before splitting into words.
    #[arg(long)]
    pub lowercase: bool,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    pub resamples: usize,
    /// Bootstrap seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report destination; stdout by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Pairs every reference with its hypothesis; both sides must hold the
/// same utterance ids.
pub fn pair_up<'a>(
    reference: &'a [(String, String)],
    hypothesis: &'a [(String, String)],
    what: &Path,
) -> Result<Vec<(&'a str, &'a str)>> {
    let mut hyp: BTreeMap<&str, &str> = BTreeMap::new();
    for (id, text) in hypothesis {
        if hyp.insert(id, text).is_some() {
            return Err(CoreError::Corpus(format!("{}: duplicate id {id}", what.display())).into());
        }
    }
    let mut out = Vec::with_capacity(reference.len());
    for (id, text) in reference {
        let h = hyp.remove(id.as_str()).ok_or_else(|| {
            CoreError::Corpus(format!("{}: no hypothesis for {id}", what.display()))
        })?;
        out.push((text.as_str(), h));
    }
    if let Some(extra) = hyp.keys().next() {
        return Err(CoreError::Corpus(format!("{}: {extra} is not in the reference", what.display())).into());
    }
    Ok(out)
}

fn score(
    reference: &[(String, String)],
    path: &Path,
    lowercase: bool,
) -> Result<CorpusReport> {
    let hyp = load_transcripts(path)?;
    Ok(corpus_wer(&pair_up(reference, &hyp, path)?, lowercase)?)
}

pub fn run(args: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let reference = load_transcripts(&args.reference)?;
    let system = score(&reference, &args.hyp, args.lowercase)?;
    let baseline = args
        .baseline
        .as_deref()
        .map(|p| score(&reference, p, args.lowercase))
        .transpose()?;
    let per: Vec<(usize, usize)> = system
        .per_utterance
        .iter()
        .map(|c| (c.errors(), c.reference_words))
        .collect();
    let ci = bootstrap_ci(&per, args.resamples, args.seed)?;
    let mut report = String::new();
    report.push_str(&format!("utterances\t{}\n", per.len()));
    report.push_str(&format!("reference_words\t{}\n", system.totals.reference_words));
    report.push_str(&format!("wer\t{:.4}\n", system.wer));
    report.push_str(&format!(
        "ci95\t{:.4}\t{:.4}\t(resamples {}, seed {})\n",
        ci.lower, ci.upper, ci.resamples, ci.seed
    ));
    report.push_str(&format!(
        "table_cell\t{}\n",
        format_table_cell(
            system.wer * 100.0,
            baseline.as_ref().map(|b| b.wer * 100.0),
            ci.lower * 100.0,
            ci.upper * 100.0
        )
    ));
    report.push_str(&format_breakdown(&system, baseline.as_ref()));
    emit_to(args.out.as_deref(), out, &report)
}
