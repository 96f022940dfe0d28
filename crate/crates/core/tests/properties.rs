use proptest::prelude::*;

use sens_asr_core::autodiff::Graph;
use sens_asr_core::chunk_mask::{build_mask, ChunkSpec, LeftContext};
use sens_asr_core::distillation::{HashTeacher, TeacherProvider};
use sens_asr_core::eval::{align, corpus_wer, tokenize};
use sens_asr_core::oracle::mask_entry;
use sens_asr_core::pair_builder::{filter_candidates, ParaphraseCandidate, TokenF1Scorer, Utterance};
use sens_asr_core::rng::seeded;
use sens_asr_core::transducer::{fastemit_loss, rnnt_loss, JointLattice, Vocabulary};
use sens_asr_core::Tensor;

fn left_context() -> impl Strategy<Value = LeftContext> {
    prop_oneof![
        Just(LeftContext::Unlimited),
        (0usize..4).prop_map(LeftContext::Chunks)
    ]
}

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..8)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #[test]
    fn mask_is_chunk_causal(t in 1usize..30, s_frac in 0.0f64..1.0, left in left_context()) {
        let s = 1 + ((t - 1) as f64 * s_frac) as usize;
        let spec = ChunkSpec::new(s, left, t).unwrap();
        let mask = build_mask(&spec);
        for i in 0..t {
            // Every frame sees its whole chunk and nothing in a later chunk.
            prop_assert!(mask.get(i, i));
            for j in 0..t {
                prop_assert_eq!(mask.get(i, j), mask_entry(i, j, s, left));
                if j / s > i / s {
                    prop_assert!(!mask.get(i, j));
                }
                if j / s == i / s {
                    prop_assert!(mask.get(i, j));
                }
            }
        }
    }

    #[test]
    fn more_left_context_never_hides_frames(t in 1usize..20, s in 1usize..6, p in 0usize..4) {
        let s = s.min(t);
        let narrow = build_mask(&ChunkSpec::new(s, LeftContext::Chunks(p), t).unwrap());
        let wide = build_mask(&ChunkSpec::new(s, LeftContext::Chunks(p + 1), t).unwrap());
        let all = build_mask(&ChunkSpec::new(s, LeftContext::Unlimited, t).unwrap());
        for (n, (w, a)) in narrow.as_slice().iter().zip(wide.as_slice().iter().zip(all.as_slice())) {
            prop_assert!(!n || *w);
            prop_assert!(!w || *a);
        }
    }

    #[test]
    fn masked_softmax_ignores_shifts(
        row in prop::collection::vec(-5.0f64..5.0, 1..8),
        shift in -20.0f64..20.0,
        keep in prop::collection::vec(any::<bool>(), 8),
    ) {
        let n = row.len();
        let mut mask: Vec<bool> = keep[..n].to_vec();
        mask[0] = true;
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::new(&[1, n], row.clone()).unwrap());
        let b = g.constant(Tensor::new(&[1, n], row.iter().map(|v| v + shift).collect()).unwrap());
        let pa = g.masked_softmax(a, &mask).unwrap();
        let pb = g.masked_softmax(b, &mask).unwrap();
        let (pa, pb) = (g.value(pa).clone(), g.value(pb).clone());
        prop_assert!((pa.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for ((x, y), keep) in pa.data().iter().zip(pb.data()).zip(&mask) {
            prop_assert!((x - y).abs() < 1e-12);
            if !keep {
                prop_assert_eq!(*x, 0.0);
            }
        }
    }

    #[test]
    fn alignment_is_a_metric(r in words(), h in words()) {
        let same = align(&r, &r);
        prop_assert_eq!((same.insertions, same.deletions, same.substitutions), (0, 0, 0));
        let fwd = align(&r, &h);
        let back = align(&h, &r);
        prop_assert_eq!(fwd.errors(), back.errors());
        prop_assert!(fwd.errors() <= r.len().max(h.len()));
        prop_assert!(fwd.errors() >= r.len().abs_diff(h.len()));
        prop_assert_eq!(h.len() + fwd.deletions, r.len() + fwd.insertions);
    }

    #[test]
    fn corpus_wer_pools_counts(
        pairs in prop::collection::vec((words(), words()), 1..6),
        split in 0usize..6,
    ) {
        let texts: Vec<(String, String)> =
            pairs.iter().map(|(r, h)| (r.join(" "), h.join(" "))).collect();
        let refs: Vec<(&str, &str)> = texts.iter().map(|(r, h)| (r.as_str(), h.as_str())).collect();
        let words: usize = pairs.iter().map(|(r, _)| r.len()).sum();
        prop_assume!(words > 0);
        let whole = corpus_wer(&refs, false).unwrap();
        let split = split.min(refs.len());
        let (a, b) = refs.split_at(split);
        let errors: usize = [a, b]
            .iter()
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.iter()
                    .map(|(r, h)| align(&tokenize(r, false), &tokenize(h, false)).errors())
                    .sum::<usize>()
            })
            .sum();
        prop_assert!((whole.wer - errors as f64 / words as f64).abs() < 1e-12);
    }

    #[test]
    fn filtering_is_idempotent(
        orig in "[a-d]{1,3}( [a-d]{1,3}){0,4}",
        cands in prop::collection::vec("[a-d]{1,3}( [a-d]{1,3}){0,8}", 0..8),
    ) {
        let u = Utterance { id: "u".into(), speaker: "s".into(), text: orig };
        let cands: Vec<ParaphraseCandidate> = cands
            .into_iter()
            .map(|text| ParaphraseCandidate { original_id: "u".into(), text })
            .collect();
        let once = filter_candidates(&u, &cands, &TokenF1Scorer);
        let twice = filter_candidates(&u, &once, &TokenF1Scorer);
        prop_assert_eq!(&once, &twice);
        for c in &once {
            prop_assert!(c.text.chars().count() < 2 * u.text.chars().count());
        }
    }

    #[test]
    fn lattice_losses_are_consistent(t in 1usize..6, u in 0usize..4, v in 2usize..6, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let lattice = sens_asr_core::oracle::random_lattice(&mut rng, t, u, v).unwrap();
        let targets: Vec<usize> = (0..u).map(|k| 1 + (k + seed as usize) % (v - 1)).collect();
        let rnnt = rnnt_loss(&lattice, &targets).unwrap();
        prop_assert!(rnnt >= 0.0 && rnnt.is_finite());
        let fe0 = fastemit_loss(&lattice, &targets, 0.0).unwrap();
        prop_assert_eq!(fe0.total, rnnt);
        let fe = fastemit_loss(&lattice, &targets, 0.5).unwrap();
        prop_assert!((fe.total - (rnnt + 0.5 * fe.label_paths)).abs() < 1e-9);
    }

    #[test]
    fn hash_teacher_is_a_unit_function_of_text(text in "[a-z ]{1,20}", other in "[a-z]{1,5}") {
        let t = HashTeacher::new(6).unwrap();
        let a = t.embed("x", &text).unwrap();
        prop_assert_eq!(&a, &t.embed("y", &text).unwrap());
        let norm: f64 = a.iter().map(|v| f64::from(*v).powi(2)).sum();
        prop_assert!((norm - 1.0).abs() < 1e-5);
        if other != text {
            prop_assert_ne!(a, t.embed("x", &other).unwrap());
        }
    }

    #[test]
    fn vocabulary_round_trips(ids in prop::collection::vec(1usize..5, 0..10)) {
        let vocab = Vocabulary::with_blank("<b>", &["w", "x", "y", "z"]).unwrap();
        let text = vocab.decode(&ids);
        prop_assert_eq!(vocab.encode(&text).unwrap(), ids);
        prop_assert_eq!(Vocabulary::from_lines(&vocab.to_lines()).unwrap(), vocab);
    }
}

#[test]
fn lattice_rejects_bad_targets() {
    let lattice = JointLattice::new(2, 2, 3, vec![(1.0f64 / 3.0).ln(); 12]).unwrap();
    assert!(rnnt_loss(&lattice, &[0]).is_err());
    assert!(rnnt_loss(&lattice, &[3]).is_err());
    assert!(rnnt_loss(&lattice, &[1, 2]).is_err());
}
