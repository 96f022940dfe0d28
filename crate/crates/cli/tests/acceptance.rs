//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
//! fails. Pass criterion numbers as arguments to run a subset.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng as _;

use sens_asr::binio::{
    decode_checkpoint, decode_features, encode_checkpoint, encode_features, load_checkpoint,
    load_features, save_checkpoint, save_features,
};
use sens_asr::commands::{build_pairs, stream_decode};
use sens_asr::training::train_loop;
use sens_asr::CliError;
use sens_asr_core::autodiff::Graph;
use sens_asr_core::chunk_mask::{build_mask, ChunkSpec, DctPolicy, LeftContext};
use sens_asr_core::context::ContextConfig;
use sens_asr_core::distillation::{
    total_loss, total_loss_var, HashTeacher, LossWeights, TeacherProvider,
};
use sens_asr_core::encoder::{EncoderConfig, DOWNSAMPLE};
use sens_asr_core::eval::{
    bootstrap_ci, bootstrap_distribution, corpus_wer, format_relative_delta, format_table_cell,
    BootstrapCi, CorpusReport,
};
use sens_asr_core::gradcheck::suite::run_suite;
use sens_asr_core::gradcheck::TOL_F32;
use sens_asr_core::model::{ModelConfig, SensModel};
use sens_asr_core::oracle::{mask_sweep, rnnt_sweep};
use sens_asr_core::pair_builder::{
    SimilarityScorer, TokenF1Scorer, Utterance, NEGATIVE_LABELS, POSITIVE_LABELS,
};
use sens_asr_core::params::ParamSet;
use sens_asr_core::rng::{derived, seeded, Rng};
use sens_asr_core::streaming::{Stream, StreamConfig};
use sens_asr_core::synth::{paraphrase_candidates, synth_dataset, SynthSpec};
use sens_asr_core::train::{
    example_gradients, Example, OptimizerConfig, OptimizerKind, StepLog, TrainConfig, Trainer,
};
use sens_asr_core::transducer::{Vocabulary, DEFAULT_MAX_SYMBOLS};
use sens_asr_core::Tensor;

struct Verdict {
    pass: bool,
    summary: String,
    notes: Vec<String>,
}

impl Verdict {
    fn new(pass: bool, summary: String) -> Self {
        Self {
            pass,
            summary,
            notes: Vec::new(),
        }
    }
}

type Outcome = Result<Verdict, String>;

trait Ctx<T> {
    fn ctx(self) -> Result<T, String>;
}

impl<T, E: Display> Ctx<T> for Result<T, E> {
    fn ctx(self) -> Result<T, String> {
        self.map_err(|e| e.to_string())
    }
}

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "rnnt loss matches path enumeration",
            limit: Some(Duration::from_secs(10)),
            run: rnnt_oracle,
        },
        Criterion {
            id: 2,
            name: "finite-difference gradient suite",
            limit: Some(Duration::from_secs(60)),
            run: gradient_suite,
        },
        Criterion {
            id: 3,
            name: "chunk mask matches the literal formula",
            limit: Some(Duration::from_secs(5)),
            run: mask_oracle,
        },
        Criterion {
            id: 4,
            name: "streaming equals offline",
            limit: Some(Duration::from_secs(60)),
            run: streaming_equivalence,
        },
        Criterion {
            id: 5,
            name: "masked-out frames carry no information",
            limit: None,
            run: mask_respect,
        },
        Criterion {
            id: 6,
            name: "toy task trend table",
            limit: Some(Duration::from_secs(15 * 60)),
            run: toy_training,
        },
        Criterion {
            id: 7,
            name: "pair builder contract",
            limit: Some(Duration::from_secs(5)),
            run: pair_builder,
        },
        Criterion {
            id: 8,
            name: "bootstrap confidence interval",
            limit: None,
            run: bootstrap,
        },
        Criterion {
            id: 9,
            name: "distillation convergence and linearity",
            limit: None,
            run: distillation,
        },
        Criterion {
            id: 10,
            name: "serialization round trips",
            limit: None,
            run: serialization,
        },
    ];
    let selected: BTreeSet<u8> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for c in criteria {
        if !selected.is_empty() && !selected.contains(&c.id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let mut v = outcome.unwrap_or_else(|e| Verdict::new(false, format!("error: {e}")));
        if let Some(limit) = c.limit {
            if elapsed > limit {
                v.pass = false;
                v.summary
                    .push_str(&format!("; over the {} s budget", limit.as_secs()));
            }
        }
        for n in &v.notes {
            println!("    {n}");
        }
        println!(
            "criterion {:>2} {}: {} ({}; {:.2} s)",
            c.id,
            c.name,
            if v.pass { "PASS" } else { "FAIL" },
            v.summary,
            elapsed.as_secs_f64()
        );
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn rnnt_oracle() -> Outcome {
    let r = rnnt_sweep(100, 1).ctx()?;
    Ok(Verdict::new(
        r.cases == 100 && r.max_rnnt_err <= 1e-6 && r.max_label_err <= 1e-6,
        format!(
            "{} lattices up to T=4 U=3 V=5, max error {:.1e}, label-path term {:.1e}",
            r.cases, r.max_rnnt_err, r.max_label_err
        ),
    ))
}

fn gradient_suite() -> Outcome {
    let weights = LossWeights {
        alpha: 0.2,
        lambda_fastemit: 0.006,
    };
    let mut entries = run_suite::<f32>(20, 2, &weights).ctx()?;
    let pass = entries
        .iter()
        .all(|e| e.instances >= 20 && e.passes(TOL_F32));
    let failing = entries.iter().filter(|e| !e.passes(TOL_F32)).count();
    let count = entries.len();
    entries.sort_by(|a, b| b.max_rel_err.total_cmp(&a.max_rel_err));
    let mut v = Verdict::new(
        pass,
        format!(
            "{count} checks x 20 instances at f32, {failing} over {TOL_F32:e}, worst {} at {:.2e}",
            entries[0].name, entries[0].max_rel_err
        ),
    );
    v.notes = entries
        .iter()
        .take(3)
        .map(|e| format!("{}: max relative error {:.2e}", e.name, e.max_rel_err))
        .collect();
    Ok(v)
}

fn mask_oracle() -> Outcome {
    let m = mask_sweep(12).ctx()?;
    Ok(Verdict::new(
        m.matrices > 0 && m.mismatched_entries == 0 && m.full_chunk_failures == 0,
        format!(
            "{} masks for T <= 12, {} mismatched entries, {} full-chunk masks not all ones",
            m.matrices, m.mismatched_entries, m.full_chunk_failures
        ),
    ))
}

fn pick<T: Copy>(rng: &mut Rng, options: &[T]) -> T {
    *options.choose(rng).expect("non-empty")
}

fn random_left(rng: &mut Rng, max_chunks: usize, allow_zero: bool) -> LeftContext {
    if rng.gen_bool(0.3) {
        LeftContext::Unlimited
    } else {
        LeftContext::Chunks(rng.gen_range(usize::from(!allow_zero)..=max_chunks))
    }
}

/// Small random model whose blank is discouraged so transcripts are non-empty.
fn random_model(rng: &mut Rng) -> Result<(SensModel, ParamSet<f32>), String> {
    let heads = rng.gen_range(1..=2);
    let config = ModelConfig {
        encoder: EncoderConfig {
            feat_dim: rng.gen_range(2..=6),
            num_layers: rng.gen_range(1..=2),
            d_model: 8 * heads,
            num_heads: heads,
            ffn_dim: 16,
            conv_kernel: pick(rng, &[1, 3, 5, 7]),
            max_positions: 64,
        },
        context: ContextConfig {
            num_decoder_layers: rng.gen_range(1..=2),
            teacher_dim: 4,
            window: random_left(rng, 3, false),
            num_heads: heads,
            ffn_dim: 16,
        },
        pred_dim: 8,
        joint_dim: 12,
        vocab_size: rng.gen_range(3..=6),
    };
    let (model, mut params) = SensModel::new(&config, rng.gen()).ctx()?;
    let id = params.id("joint.output.bias").ok_or("no joint output bias")?;
    params.get_mut(id).data_mut()[0] -= 1.5;
    Ok((model, params))
}

fn random_features(rng: &mut Rng, rows: usize, dim: usize) -> Result<Tensor<f32>, String> {
    Tensor::new(
        &[rows, dim],
        (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .ctx()
}

fn streaming_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let mut tokens = 0;
    let mut mismatched = Vec::new();
    for case in 0..20u64 {
        let mut rng = derived(4, case);
        let (model, params) = random_model(&mut rng)?;
        let raw = rng.gen_range(DOWNSAMPLE..=64 * DOWNSAMPLE);
        let features = random_features(&mut rng, raw, model.config.encoder.feat_dim)?;
        let frames = raw.div_ceil(DOWNSAMPLE);
        let chunk = rng.gen_range(1..=frames);
        let left = random_left(&mut rng, 3, true);
        let window = random_left(&mut rng, 3, false);
        let offline = model
            .decode_offline(&params, &features, chunk, left, Some(window), DEFAULT_MAX_SYMBOLS)
            .ctx()?;
        let config = StreamConfig {
            chunk_frames: chunk,
            left_context: left,
            context_window: Some(window),
            max_symbols: DEFAULT_MAX_SYMBOLS,
        };
        let mut stream = Stream::open(&model, &params, config).ctx()?;
        stream.record_frames();
        let dim = model.config.encoder.feat_dim;
        let mut start = 0;
        while start < raw {
            let end = (start + rng.gen_range(1..=3 * DOWNSAMPLE * chunk)).min(raw);
            let block = Tensor::new(
                &[end - start, dim],
                features.data()[start * dim..end * dim].to_vec(),
            )
            .ctx()?;
            stream.push_chunk(&block).ctx()?;
            start = end;
        }
        let result = stream.close().ctx()?;
        let streamed = stream.recorded_frames().ctx()?.ok_or("nothing recorded")?;
        if streamed.shape() != offline.frames.shape() {
            return Err(format!("case {case}: frame shapes differ"));
        }
        worst = worst.max(streamed.max_abs_diff(&offline.frames));
        tokens += result.tokens.len();
        if result.tokens != offline.tokens() {
            mismatched.push(case);
        }
    }
    Ok(Verdict::new(
        worst <= 1e-5 && mismatched.is_empty() && tokens > 0,
        format!(
            "20 configurations, max frame difference {worst:.1e}, {tokens} tokens, transcripts differing: {mismatched:?}"
        ),
    ))
}

/// `dep[t][u]`: whether input frame `u` can reach output frame `t` through
/// `layers` rounds of masked attention followed by a causal convolution of
/// width `kernel`.
fn dependencies(mask: &[Vec<bool>], kernel: usize, layers: usize) -> Vec<Vec<bool>> {
    let n = mask.len();
    let layer: Vec<Vec<bool>> = (0..n)
        .map(|t| {
            (0..n)
                .map(|u| (t.saturating_sub(kernel - 1)..=t).any(|v| mask[v][u]))
                .collect()
        })
        .collect();
    let mut dep: Vec<Vec<bool>> = (0..n).map(|t| (0..n).map(|u| t == u).collect()).collect();
    for _ in 0..layers {
        dep = (0..n)
            .map(|t| {
                (0..n)
                    .map(|u| (0..n).any(|v| layer[t][v] && dep[v][u]))
                    .collect()
            })
            .collect();
    }
    dep
}

fn encode(
    model: &SensModel,
    params: &ParamSet<f32>,
    features: &Tensor<f32>,
    spec: &ChunkSpec,
) -> Result<Tensor<f32>, String> {
    let mut g = Graph::new();
    let p = params.bind_frozen(&mut g);
    let x = g.constant(features.clone());
    let h = model.encoder.encode(&mut g, &p, x, &build_mask(spec)).ctx()?;
    Ok(g.value(h).clone())
}

fn mask_respect() -> Outcome {
    let mut checked = 0usize;
    let mut masked_out_checked = 0usize;
    let mut influenced = 0usize;
    let mut worst = 0.0f64;
    for case in 0..12u64 {
        let mut rng = derived(5, case);
        let (mut model, params) = random_model(&mut rng)?;
        let frames = rng.gen_range(2..=20);
        let chunk = rng.gen_range(1..=frames);
        let mut left = random_left(&mut rng, 2, true);
        if case == 0 {
            // One layer, pointwise convolution, no left context: the
            // dependency pattern is exactly the attention mask.
            let config = ModelConfig {
                encoder: EncoderConfig {
                    num_layers: 1,
                    conv_kernel: 1,
                    ..model.config.encoder.clone()
                },
                ..model.config.clone()
            };
            let (m, _) = SensModel::new(&config, 9).ctx()?;
            model = m;
            left = LeftContext::Chunks(0);
        }
        let params = if case == 0 {
            SensModel::new(&model.config, 9).ctx()?.1
        } else {
            params
        };
        let dim = model.config.encoder.feat_dim;
        let features = random_features(&mut rng, frames * DOWNSAMPLE, dim)?;
        let spec = ChunkSpec::new(chunk, left, frames).ctx()?;
        let mask = build_mask(&spec).to_rows();
        let mask: Vec<Vec<bool>> = mask
            .iter()
            .map(|r| r.iter().map(|&m| m != 0).collect())
            .collect();
        let dep = dependencies(
            &mask,
            model.config.encoder.conv_kernel,
            model.config.encoder.num_layers,
        );
        if case == 0 && dep != mask {
            return Err("single pointwise layer: dependencies differ from the mask".into());
        }
        let base = encode(&model, &params, &features, &spec)?;
        let d = base.shape()[1];
        for u in 0..frames {
            let mut zeroed = features.clone();
            zeroed.data_mut()[u * DOWNSAMPLE * dim..(u + 1) * DOWNSAMPLE * dim].fill(0.0);
            let h = encode(&model, &params, &zeroed, &spec)?;
            for t in 0..frames {
                let diff = base
                    .row(t)
                    .iter()
                    .zip(h.row(t))
                    .map(|(a, b)| f64::from((a - b).abs()))
                    .fold(0.0, f64::max);
                if dep[t][u] {
                    influenced += usize::from(diff > 0.0);
                } else {
                    checked += d;
                    masked_out_checked += usize::from(!mask[t][u]);
                    worst = worst.max(diff);
                }
            }
        }
    }
    Ok(Verdict::new(
        worst <= 1e-5 && masked_out_checked > 0 && influenced > 0,
        format!(
            "12 configurations, {masked_out_checked} masked-out (frame, source) pairs, {checked} values outside the receptive field changed by at most {worst:.1e}; {influenced} in-field pairs do respond"
        ),
    ))
}

const TOY_STEPS: usize = 1500;
const TOY_TEACHER_DIM: usize = 16;

struct Toy {
    vocab: Vocabulary,
    config: ModelConfig,
    train_plain: Vec<Example>,
    train_taught: Vec<Example>,
    test: Vec<(String, Tensor<f32>)>,
}

fn examples(
    spec: &SynthSpec,
    teacher: Option<&HashTeacher>,
) -> Result<(Vocabulary, Vec<Example>, Vec<String>), String> {
    let ds = synth_dataset(spec).ctx()?;
    let mut out = Vec::new();
    let mut texts = Vec::new();
    for u in &ds.utterances {
        let teacher = match teacher {
            Some(t) => Some(Tensor::new(&[t.dim()], t.embed(&u.id, &u.text).ctx()?).ctx()?),
            None => None,
        };
        out.push(Example {
            id: u.id.clone(),
            features: u.features.clone(),
            targets: ds.vocabulary.encode(&u.text).ctx()?,
            teacher,
        });
        texts.push(u.text.clone());
    }
    Ok((ds.vocabulary, out, texts))
}

fn toy() -> Result<&'static Toy, String> {
    static TOY: OnceLock<Result<Toy, String>> = OnceLock::new();
    TOY.get_or_init(|| {
        let teacher = HashTeacher::new(TOY_TEACHER_DIM).ctx()?;
        let train = SynthSpec {
            utterances: 200,
            seed: 0,
            ..SynthSpec::default()
        };
        let (vocab, train_plain, _) = examples(&train, None)?;
        let (_, train_taught, _) = examples(&train, Some(&teacher))?;
        let test = SynthSpec {
            utterances: 60,
            seed: 1,
            ..SynthSpec::default()
        };
        let (_, test_examples, texts) = examples(&test, None)?;
        let mut config = ModelConfig::desk(train.feat_dim, vocab.len());
        config.context.teacher_dim = TOY_TEACHER_DIM;
        Ok(Toy {
            vocab,
            config,
            train_plain,
            train_taught,
            test: texts
                .into_iter()
                .zip(test_examples.into_iter().map(|e| e.features))
                .collect(),
        })
    })
    .as_ref()
    .map_err(Clone::clone)
}

fn toy_train_config(alpha: f64, steps: usize) -> TrainConfig {
    TrainConfig {
        weights: LossWeights {
            alpha,
            lambda_fastemit: 0.006,
        },
        policy: DctPolicy::default(),
        optimizer: OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 3e-3,
            ..OptimizerConfig::published()
        },
        batch_size: 8,
        steps,
        seed: 0,
        frozen_prefixes: Vec::new(),
    }
}

fn run_training(
    model: &SensModel,
    params: &mut ParamSet<f32>,
    config: TrainConfig,
    examples: &[Example],
) -> Result<Vec<StepLog>, String> {
    let mut trainer = Trainer::new(config, params, examples.len()).ctx()?;
    let mut logs = Vec::new();
    train_loop(&mut trainer, model, params, examples, 1, |l, _| {
        logs.push(*l);
        Ok(true)
    })
    .ctx()?;
    Ok(logs)
}

type Trained = (SensModel, ParamSet<f32>, Vec<StepLog>);

/// Transducer trained without distillation, shared by the trend table and
/// the frozen-encoder distillation run.
fn toy_baseline() -> Result<&'static Trained, String> {
    static BASELINE: OnceLock<Result<Trained, String>> = OnceLock::new();
    BASELINE
        .get_or_init(|| {
            let toy = toy()?;
            let (model, mut params) = SensModel::new(&toy.config, 0).ctx()?;
            let logs = run_training(
                &model,
                &mut params,
                toy_train_config(0.0, TOY_STEPS),
                &toy.train_plain,
            )?;
            Ok((model, params, logs))
        })
        .as_ref()
        .map_err(Clone::clone)
}

fn evaluate(
    toy: &Toy,
    model: &SensModel,
    params: &ParamSet<f32>,
    chunk: Option<usize>,
) -> Result<(CorpusReport, BootstrapCi), String> {
    let mut hyps = Vec::with_capacity(toy.test.len());
    for (_, features) in &toy.test {
        let emissions = match chunk {
            Some(s) => stream_decode(model, params, features, StreamConfig::new(s, LeftContext::Unlimited))
                .ctx()?,
            None => {
                model
                    .decode_offline(params, features, usize::MAX, LeftContext::Unlimited, None, DEFAULT_MAX_SYMBOLS)
                    .ctx()?
                    .emissions
            }
        };
        let tokens: Vec<usize> = emissions.iter().map(|e| e.token).collect();
        hyps.push(toy.vocab.decode(&tokens));
    }
    let pairs: Vec<(&str, &str)> = toy
        .test
        .iter()
        .zip(&hyps)
        .map(|((r, _), h)| (r.as_str(), h.as_str()))
        .collect();
    let report = corpus_wer(&pairs, false).ctx()?;
    let per: Vec<(usize, usize)> = report
        .per_utterance
        .iter()
        .map(|c| (c.errors(), c.reference_words))
        .collect();
    let ci = bootstrap_ci(&per, 1000, 0).ctx()?;
    Ok((report, ci))
}

fn mean_tail(logs: &[StepLog], n: usize) -> f64 {
    let tail = &logs[logs.len().saturating_sub(n)..];
    tail.iter().map(|l| l.rnnt).sum::<f64>() / tail.len() as f64
}

// 3.14 below is a CI bound, not an approximation of pi.
#[allow(clippy::approx_constant)]
fn toy_training() -> Outcome {
    // Published cells and breakdown deltas the formatter must reproduce.
    let format_ok = format_table_cell(7.21, Some(7.55), 6.89, 7.53) == "7.21(-0.34) [6.89;7.53]"
        && format_table_cell(2.93, Some(2.90), 2.73, 3.14) == "2.93(+0.03) [2.73;3.14]"
        && format_table_cell(7.55, None, 7.24, 7.87) == "7.55 [7.24;7.87]"
        && format_relative_delta(507, 403) == "-20.51%"
        && format_relative_delta(374, 370) == "-1.07%"
        && format_relative_delta(3091, 3020) == "-2.30%";

    let toy = toy()?;
    let (base_model, base_params, base_logs) = toy_baseline()?;
    let (sens_model, mut sens_params) = SensModel::new(&toy.config, 0).ctx()?;
    let sens_logs = run_training(
        &sens_model,
        &mut sens_params,
        toy_train_config(0.2, TOY_STEPS),
        &toy.train_taught,
    )?;

    let columns = [("160 ms", Some(4)), ("320 ms", Some(8)), ("full", None)];
    let mut base_row = Vec::new();
    let mut sens_row = Vec::new();
    let mut full_wer = (1.0, 1.0);
    let mut small = (0.0, 0.0);
    for (i, (_, chunk)) in columns.iter().enumerate() {
        let (b, bci) = evaluate(toy, base_model, base_params, *chunk)?;
        let (s, sci) = evaluate(toy, &sens_model, &sens_params, *chunk)?;
        base_row.push(format_table_cell(
            b.wer * 100.0,
            None,
            bci.lower * 100.0,
            bci.upper * 100.0,
        ));
        sens_row.push(format_table_cell(
            s.wer * 100.0,
            Some(b.wer * 100.0),
            sci.lower * 100.0,
            sci.upper * 100.0,
        ));
        if i == 0 {
            small = (b.wer, s.wer);
        }
        if chunk.is_none() {
            full_wer = (b.wer, s.wer);
        }
    }
    let width = 24;
    let mut notes = vec![format!(
        "{:<10}{}",
        "WER (%)",
        columns
            .iter()
            .map(|(n, _)| format!("{n:<width$}"))
            .collect::<String>()
    )];
    for (name, row) in [("Baseline", &base_row), ("SENS-ASR", &sens_row)] {
        notes.push(format!(
            "{name:<10}{}",
            row.iter().map(|c| format!("{c:<width$}")).collect::<String>()
        ));
    }
    let direction = match small.1.partial_cmp(&small.0) {
        Some(std::cmp::Ordering::Less) => "below",
        Some(std::cmp::Ordering::Greater) => "above",
        _ => "equal to",
    };
    notes.push(format!(
        "semantic context at 160 ms: WER {direction} the baseline (recorded, not gated)"
    ));
    let losses = (mean_tail(base_logs, 50), mean_tail(&sens_logs, 50));
    notes.push(format!(
        "final transducer training loss (mean of last 50 steps): baseline {:.4}, semantic {:.4}",
        losses.0, losses.1
    ));
    let mut v = Verdict::new(
        format_ok && full_wer.0 < 0.05 && full_wer.1 < 0.05 && losses.0 < 0.1 && losses.1 < 0.1,
        format!(
            "full-context WER {:.2}% / {:.2}%, train loss {:.3} / {:.3}, table format {}",
            full_wer.0 * 100.0,
            full_wer.1 * 100.0,
            losses.0,
            losses.1,
            if format_ok { "exact" } else { "WRONG" }
        ),
    );
    v.notes = notes;
    Ok(v)
}

fn pair_builder() -> Outcome {
    let ds = synth_dataset(&SynthSpec {
        utterances: 50,
        speakers: 5,
        ..SynthSpec::default()
    })
    .ctx()?;
    // A trailing tag keeps every sentence unique so each triplet side can be
    // traced back to one speaker.
    let corpus: Vec<Utterance> = ds
        .utterances
        .iter()
        .enumerate()
        .map(|(i, u)| Utterance {
            id: u.id.clone(),
            speaker: u.speaker.clone(),
            text: format!("{} tag{i}", u.text),
        })
        .collect();
    let mut candidates = Vec::new();
    for u in &corpus {
        candidates.extend(paraphrase_candidates(&u.id, &u.text));
        let mut twice = candidates.last().expect("candidates").clone();
        twice.text = format!("{} {}", u.text, &u.text[..u.text.len() - 1]);
        candidates.push(twice);
    }
    let triplets = build_pairs(&corpus, &candidates, &TokenF1Scorer, &mut seeded(7)).ctx()?;

    let by_id: BTreeMap<&str, &Utterance> = corpus.iter().map(|u| (u.id.as_str(), u)).collect();
    let mut speaker_of: BTreeMap<&str, &str> = BTreeMap::new();
    let mut accepted: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut rejected: BTreeSet<&str> = BTreeSet::new();
    for u in &corpus {
        speaker_of.insert(&u.text, &u.speaker);
    }
    for c in &candidates {
        let orig = by_id[c.original_id.as_str()];
        let too_long = c.text.chars().count() >= 2 * orig.text.chars().count();
        if too_long || TokenF1Scorer.score(&orig.text, &c.text) < 0.5 {
            rejected.insert(&c.text);
        } else {
            accepted.insert((&orig.text, &c.text));
            if speaker_of.insert(&c.text, &orig.speaker).is_some_and(|s| s != orig.speaker) {
                return Err(format!("candidate {:?} is ambiguous", c.text));
            }
        }
    }
    rejected.retain(|t| !speaker_of.contains_key(t));

    let positives = triplets.iter().filter(|t| t.is_positive()).count();
    let total = triplets.len();
    let labels_ok = triplets.iter().all(|t| {
        (POSITIVE_LABELS.0..=POSITIVE_LABELS.1).contains(&t.label)
            || (NEGATIVE_LABELS.0..=NEGATIVE_LABELS.1).contains(&t.label)
    });
    let fraction_ok = (3 * positives).abs_diff(2 * total) <= 3;
    let mut same_speaker = 0;
    let mut leaked = 0;
    let mut bad_positive = 0;
    for t in &triplets {
        leaked += usize::from(
            rejected.contains(t.sentence_a.as_str()) || rejected.contains(t.sentence_b.as_str()),
        );
        if t.is_positive() {
            bad_positive +=
                usize::from(!accepted.contains(&(t.sentence_a.as_str(), t.sentence_b.as_str())));
        } else {
            let a = speaker_of.get(t.sentence_a.as_str());
            let b = speaker_of.get(t.sentence_b.as_str());
            same_speaker += usize::from(a.is_none() || b.is_none() || a == b);
        }
    }
    Ok(Verdict::new(
        total > 0
            && labels_ok
            && fraction_ok
            && same_speaker == 0
            && leaked == 0
            && bad_positive == 0,
        format!(
            "{total} triplets, {positives} positive, labels in range: {labels_ok}, same-speaker negatives {same_speaker}, filtered candidates used {leaked}, unmatched positives {bad_positive}"
        ),
    ))
}

/// Linear-interpolation percentile, written independently of the library.
fn percentile_oracle(sorted: &[f64], pct: f64) -> f64 {
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn bootstrap() -> Outcome {
    let mut rng = seeded(8);
    let per: Vec<(usize, usize)> = (0..40)
        .map(|_| {
            let w = rng.gen_range(1..20);
            (rng.gen_range(0..=w / 2), w)
        })
        .collect();
    let a = bootstrap_ci(&per, 1000, 5).ctx()?;
    let b = bootstrap_ci(&per, 1000, 5).ctx()?;
    let deterministic = a == b && a.resamples == 1000 && a.lower <= a.point && a.point <= a.upper;

    let flat = bootstrap_ci(&[(1, 4); 10], 1000, 3).ctx()?;
    let degenerate = flat.lower == flat.point && flat.upper == flat.point;

    // Two equal-length utterances with WER 0 and 1: the four equally likely
    // resamples have WERs 0, 0.5, 0.5 and 1.
    let two = [(0, 5), (5, 5)];
    let exhaustive = [0.0, 0.5, 0.5, 1.0];
    let ci = bootstrap_ci(&two, 10_000, 11).ctx()?;
    let lo = percentile_oracle(&exhaustive, 2.5);
    let hi = percentile_oracle(&exhaustive, 97.5);
    let bounds_err = (ci.lower - lo).abs().max((ci.upper - hi).abs());
    let dist = bootstrap_distribution(&two, 10_000, 11);
    let mass_err = [0.0, 0.5, 1.0]
        .iter()
        .zip([0.25, 0.5, 0.25])
        .map(|(&v, p)| {
            let share = dist.iter().filter(|&&x| x == v).count() as f64 / dist.len() as f64;
            (share - p).abs()
        })
        .fold(0.0, f64::max);
    Ok(Verdict::new(
        deterministic && degenerate && bounds_err <= 0.05 && mass_err <= 0.05,
        format!(
            "seeded runs identical: {deterministic}, degenerate interval collapses: {degenerate}, two-utterance bounds [{:.3};{:.3}] vs exhaustive [{lo:.4};{hi:.4}], mass error {mass_err:.3}",
            ci.lower, ci.upper
        ),
    ))
}

fn corpus_mse(
    model: &SensModel,
    params: &ParamSet<f32>,
    examples: &[Example],
    weights: &LossWeights,
) -> Result<f64, String> {
    let mut sum = 0.0;
    for e in examples {
        let frames = e.features.shape()[0].div_ceil(DOWNSAMPLE);
        let spec = ChunkSpec::new(4.min(frames), LeftContext::Unlimited, frames).ctx()?;
        let r = example_gradients(model, params, e, &spec, weights).ctx()?;
        sum += r.mse.ok_or("example without teacher")?;
    }
    Ok(sum / examples.len() as f64)
}

fn distillation() -> Outcome {
    let toy = toy()?;
    let (model, trained, _) = toy_baseline()?;
    let weights = LossWeights {
        alpha: 0.2,
        lambda_fastemit: 0.006,
    };
    let mut params = trained.clone();
    let before = corpus_mse(model, &params, &toy.train_taught, &weights)?;
    let config = TrainConfig {
        policy: DctPolicy {
            chunked_batch_fraction: 1.0,
            chunk_ms_min: 160.0,
            chunk_ms_max: 160.0,
            ..DctPolicy::default()
        },
        optimizer: OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            ..OptimizerConfig::published()
        },
        frozen_prefixes: vec!["encoder.".into(), "predictor.".into(), "joint.".into()],
        ..toy_train_config(weights.alpha, 200)
    };
    let logs = run_training(model, &mut params, config, &toy.train_taught)?;
    let after = corpus_mse(model, &params, &toy.train_taught, &weights)?;
    let frozen_intact = params
        .iter()
        .zip(trained.iter())
        .filter(|((n, _), _)| !n.starts_with("context."))
        .all(|((_, a), (_, b))| a == b);

    let mut slope_err = 0.0f64;
    let mut rng = seeded(9);
    for _ in 0..50 {
        let w = LossWeights {
            alpha: rng.gen_range(0.0..2.0),
            lambda_fastemit: 0.006,
        };
        let (r, m) = (rng.gen_range(0.0..50.0), rng.gen_range(0.0..5.0));
        let h = 1e-3;
        let numeric = (total_loss(r, m + h, &w) - total_loss(r, m - h, &w)) / (2.0 * h);
        slope_err = slope_err.max((numeric - w.alpha).abs());
        let mut g = Graph::<f64>::new();
        let rv = g.param(Tensor::scalar(r));
        let mv = g.param(Tensor::scalar(m));
        let total = total_loss_var(&mut g, rv, mv, &w).ctx()?;
        let grads = g.backward(total).ctx()?;
        let dm = grads.get(mv).ok_or("no mse gradient")?.item();
        let dr = grads.get(rv).ok_or("no rnnt gradient")?.item();
        slope_err = slope_err.max((dm - w.alpha).abs()).max((dr - 1.0).abs());
    }
    let reduction = 1.0 - after / before;
    Ok(Verdict::new(
        logs.len() == 200 && reduction >= 0.5 && frozen_intact && slope_err <= 1e-6,
        format!(
            "context-only training for {} steps: MSE {before:.4} -> {after:.4} ({:.0}% lower), frozen tensors unchanged: {frozen_intact}, max |d total / d mse - alpha| {slope_err:.1e}",
            logs.len(),
            reduction * 100.0
        ),
    ))
}

fn serialization() -> Outcome {
    let dir = tempfile::tempdir().ctx()?;
    let (_, params) = SensModel::new(&ModelConfig::desk(8, 12), 4).ctx()?;
    let bytes = encode_checkpoint(params.iter()).ctx()?;
    let decoded = decode_checkpoint(&bytes).ctx()?;
    let again = encode_checkpoint(decoded.iter().map(|(n, t)| (n.as_str(), t))).ctx()?;
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&path, &params).ctx()?;
    let (_, reloaded) =
        SensModel::from_tensors(&ModelConfig::desk(8, 12), load_checkpoint(&path).ctx()?).ctx()?;
    let path2 = dir.path().join("model2.ckpt");
    save_checkpoint(&path2, &reloaded).ctx()?;
    let ckpt_ok = bytes == again
        && std::fs::read(&path).ctx()? == bytes
        && std::fs::read(&path2).ctx()? == bytes;

    let features = random_features(&mut seeded(10), 37, 8)?;
    let fbytes = encode_features(&features).ctx()?;
    let fpath = dir.path().join("x.feat");
    save_features(&fpath, &features).ctx()?;
    let reread = load_features(&fpath).ctx()?;
    let feat_ok = decode_features(&fbytes).ctx()? == features
        && encode_features(&reread).ctx()? == fbytes
        && std::fs::read(&fpath).ctx()? == fbytes;

    let is_format = |r: Result<(), CliError>| matches!(r, Err(e) if e.category() == "format");
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    let mut fbad = fbytes.clone();
    fbad[1] = b'X';
    let magic_ok =
        is_format(decode_checkpoint(&bad).map(|_| ())) && is_format(decode_features(&fbad).map(|_| ()));
    Ok(Verdict::new(
        ckpt_ok && feat_ok && magic_ok,
        format!(
            "checkpoint ({} bytes) identical: {ckpt_ok}, features identical: {feat_ok}, corrupted magic rejected as format errors: {magic_ok}",
            bytes.len()
        ),
    ))
}
