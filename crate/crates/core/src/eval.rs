//! Word error rate with an edit-type breakdown and bootstrap confidence
//! intervals.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::{Add, AddAssign};

use rand::Rng as _;

use crate::rng::derived;
use crate::{Error, Result};

/// Bootstrap resample count.
pub const DEFAULT_RESAMPLES: usize = 1000;
/// Percentile bounds of the interval.
pub const PERCENTILES: (f64, f64) = (2.5, 97.5);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
    pub reference_words: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.insertions + self.deletions + self.substitutions
    }

    /// `None` when there are no reference words.
    pub fn wer(&self) -> Option<f64> {
        (self.reference_words > 0).then(|| self.errors() as f64 / self.reference_words as f64)
    }
}

impl Add for EditCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            insertions: self.insertions + o.insertions,
            deletions: self.deletions + o.deletions,
            substitutions: self.substitutions + o.substitutions,
            reference_words: self.reference_words + o.reference_words,
        }
    }
}

impl AddAssign for EditCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Whitespace tokenization, optionally lowercased.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            if lowercase {
                w.to_lowercase()
            } else {
                w.to_string()
            }
        })
        .collect()
}

/// Minimal unit-cost alignment. On equal cost the backtrace prefers
/// substitution (or match), then insertion, then deletion.
pub fn align<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> EditCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = alloc::vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for (j, cell) in d.iter_mut().take(w).enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            d[i * w + j] = (d[(i - 1) * w + j - 1] + sub)
                .min(d[i * w + j - 1] + 1)
                .min(d[(i - 1) * w + j] + 1);
        }
    }
    let mut counts = EditCounts {
        reference_words: n,
        ..EditCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let sub = usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            if d[(i - 1) * w + j - 1] + sub == here {
                counts.substitutions += sub;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && d[i * w + j - 1] + 1 == here {
            counts.insertions += 1;
            j -= 1;
        } else {
            counts.deletions += 1;
            i -= 1;
        }
    }
    counts
}

/// Pooled corpus statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusReport {
    pub wer: f64,
    pub totals: EditCounts,
    pub per_utterance: Vec<EditCounts>,
}

/// Micro-averaged WER over `(reference, hypothesis)` transcript pairs.
pub fn corpus_wer(pairs: &[(&str, &str)], lowercase: bool) -> Result<CorpusReport> {
    let per_utterance: Vec<EditCounts> = pairs
        .iter()
        .map(|(r, h)| align(&tokenize(r, lowercase), &tokenize(h, lowercase)))
        .collect();
    let totals = per_utterance
        .iter()
        .fold(EditCounts::default(), |a, &b| a + b);
    let wer = totals
        .wer()
        .ok_or_else(|| Error::Corpus("corpus has no reference words".into()))?;
    Ok(CorpusReport {
        wer,
        totals,
        per_utterance,
    })
}

/// Percentile with linear interpolation between order statistics of `sorted`.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = (pct / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapCi {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub resamples: usize,
    pub seed: u64,
    /// Extremes of the resample distribution.
    pub min: f64,
    pub max: f64,
}

fn pooled(errors: usize, words: usize) -> f64 {
    if words == 0 {
        if errors == 0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        errors as f64 / words as f64
    }
}

/// Micro-WER of every bootstrap resample of `(errors, reference_words)`
/// records, sorted ascending. Resample `r` draws from its own derived stream.
pub fn bootstrap_distribution(
    per_utterance: &[(usize, usize)],
    resamples: usize,
    seed: u64,
) -> Vec<f64> {
    let n = per_utterance.len();
    let mut values: Vec<f64> = (0..resamples)
        .map(|r| {
            let mut rng = derived(seed, r as u64);
            let (mut e, mut w) = (0, 0);
            for _ in 0..n {
                let (ue, uw) = per_utterance[rng.gen_range(0..n)];
                e += ue;
                w += uw;
            }
            pooled(e, w)
        })
        .collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Percentile bootstrap interval of the corpus WER.
pub fn bootstrap_ci(
    per_utterance: &[(usize, usize)],
    resamples: usize,
    seed: u64,
) -> Result<BootstrapCi> {
    if per_utterance.is_empty() || resamples == 0 {
        return Err(Error::Corpus(
            "bootstrap needs at least one utterance and one resample".into(),
        ));
    }
    let (e, w) = per_utterance
        .iter()
        .fold((0, 0), |(a, b), &(ue, uw)| (a + ue, b + uw));
    let dist = bootstrap_distribution(per_utterance, resamples, seed);
    Ok(BootstrapCi {
        point: pooled(e, w),
        lower: percentile(&dist, PERCENTILES.0),
        upper: percentile(&dist, PERCENTILES.1),
        resamples,
        seed,
        min: dist[0],
        max: dist[dist.len() - 1],
    })
}

fn hundredths(x: f64) -> i64 {
    num_traits::Float::round(x * 100.0) as i64
}

fn fmt_hundredths(v: i64) -> String {
    let sign = if v < 0 { "-" } else { "" };
    let a = v.unsigned_abs();
    alloc::format!("{sign}{}.{:02}", a / 100, a % 100)
}

/// One results-table cell in percent: `7.21(-0.34) [6.89;7.53]`.
///
/// The delta against `baseline` is taken between the two-decimal rounded
/// values and omitted when it rounds to zero or there is no baseline.
pub fn format_table_cell(
    wer_pct: f64,
    baseline_pct: Option<f64>,
    lower_pct: f64,
    upper_pct: f64,
) -> String {
    let v = hundredths(wer_pct);
    let mut out = fmt_hundredths(v);
    if let Some(b) = baseline_pct {
        let delta = v - hundredths(b);
        if delta != 0 {
            let sign = if delta > 0 { "+" } else { "" };
            out.push_str(&alloc::format!("({sign}{})", fmt_hundredths(delta)));
        }
    }
    out.push_str(&alloc::format!(
        " [{};{}]",
        fmt_hundredths(hundredths(lower_pct)),
        fmt_hundredths(hundredths(upper_pct))
    ));
    out
}

/// Relative change in percent with two decimals: `507 → 403` is `-20.51%`.
pub fn format_relative_delta(baseline: usize, system: usize) -> String {
    if baseline == 0 {
        return "n/a".into();
    }
    let rel = (system as f64 - baseline as f64) / baseline as f64 * 100.0;
    let v = hundredths(rel);
    let sign = if v > 0 { "+" } else { "" };
    alloc::format!("{sign}{}%", fmt_hundredths(v))
}

/// Edit-type breakdown of a system, optionally against a baseline.
pub fn format_breakdown(system: &CorpusReport, baseline: Option<&CorpusReport>) -> String {
    type Getter = fn(&EditCounts) -> usize;
    let rows: [(&str, Getter); 3] = [
        ("Number of Insertions", |c| c.insertions),
        ("Number of Deletions", |c| c.deletions),
        ("Number of Substitutions", |c| c.substitutions),
    ];
    let mut out = String::new();
    match baseline {
        Some(b) => {
            out.push_str(&alloc::format!(
                "WER (%)\t{}\t{}\n",
                fmt_hundredths(hundredths(b.wer * 100.0)),
                fmt_hundredths(hundredths(system.wer * 100.0))
            ));
            for (label, get) in rows {
                let (bv, sv) = (get(&b.totals), get(&system.totals));
                out.push_str(&alloc::format!(
                    "{label}\t{bv}\t{sv} ({})\n",
                    format_relative_delta(bv, sv)
                ));
            }
        }
        None => {
            out.push_str(&alloc::format!(
                "WER (%)\t{}\n",
                fmt_hundredths(hundredths(system.wer * 100.0))
            ));
            for (label, get) in rows {
                out.push_str(&alloc::format!("{label}\t{}\n", get(&system.totals)));
            }
        }
    }
    out
}
