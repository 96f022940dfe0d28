//! Independent brute-force references used by tests and the `oracle-check`
//! command. Nothing here shares code with the production recursions.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use rand::Rng as _;

use crate::chunk_mask::{build_mask, ChunkSpec, LeftContext};
use crate::rng::derived;
use crate::transducer::{fastemit_loss, rnnt_loss, JointLattice, BLANK};
use crate::Result;

/// One monotonic alignment as its sequence of `(t, u, emitted)` arcs.
pub type Alignment = Vec<(usize, usize, usize)>;

/// Every alignment of `targets` through a `frames`-step lattice, final blank included.
pub fn enumerate_alignments(frames: usize, targets: &[usize]) -> Vec<Alignment> {
    fn walk(
        t: usize,
        u: usize,
        frames: usize,
        targets: &[usize],
        path: &mut Alignment,
        out: &mut Vec<Alignment>,
    ) {
        if t == frames - 1 && u == targets.len() {
            path.push((t, u, BLANK));
            out.push(path.clone());
            path.pop();
            return;
        }
        if u < targets.len() {
            path.push((t, u, targets[u]));
            walk(t, u + 1, frames, targets, path, out);
            path.pop();
        }
        if t + 1 < frames {
            path.push((t, u, BLANK));
            walk(t + 1, u, frames, targets, path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    if frames > 0 {
        walk(0, 0, frames, targets, &mut Vec::new(), &mut out);
    }
    out
}

/// `−ln Σ_alignments Π p`, summed in probability space.
pub fn brute_force_rnnt(lattice: &JointLattice, targets: &[usize]) -> f64 {
    let total: f64 = enumerate_alignments(lattice.frames(), targets)
        .iter()
        .map(|a| {
            a.iter()
                .map(|&(t, u, k)| lattice.log_prob(t, u, k).exp())
                .product::<f64>()
        })
        .sum();
    -total.ln()
}

/// Same enumeration with blank arcs weighted one.
pub fn brute_force_label_paths(lattice: &JointLattice, targets: &[usize]) -> f64 {
    let total: f64 = enumerate_alignments(lattice.frames(), targets)
        .iter()
        .map(|a| {
            a.iter()
                .filter(|&&(_, _, k)| k != BLANK)
                .map(|&(t, u, k)| lattice.log_prob(t, u, k).exp())
                .product::<f64>()
        })
        .sum();
    -total.ln()
}

/// Literal mask entry: `1` iff `⌊t/S⌋ − P ≤ ⌊u/S⌋ ≤ ⌊t/S⌋`.
pub fn mask_entry(t: usize, u: usize, chunk: usize, left: LeftContext) -> bool {
    let (ct, cu) = ((t / chunk) as i64, (u / chunk) as i64);
    let lower = match left {
        LeftContext::Chunks(p) => ct - p as i64,
        LeftContext::Unlimited => 0,
    };
    lower <= cu && cu <= ct
}

/// Largest lattice dimensions the exhaustive sweep visits.
pub const SWEEP_MAX_FRAMES: usize = 4;
pub const SWEEP_MAX_LABELS: usize = 3;
pub const SWEEP_MAX_VOCAB: usize = 5;

/// Normalized lattice from logits uniform in `[−3, 3)`.
pub fn random_lattice(
    rng: &mut crate::rng::Rng,
    frames: usize,
    labels: usize,
    vocab: usize,
) -> Result<JointLattice> {
    let mut lp = Vec::with_capacity(frames * (labels + 1) * vocab);
    for _ in 0..frames * (labels + 1) {
        let logits: Vec<f64> = (0..vocab).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        lp.extend(logits.iter().map(|l| l - z));
    }
    JointLattice::new(frames, labels + 1, vocab, lp)
}

/// Outcome of comparing the lattice recursions with enumeration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RnntSweep {
    pub cases: usize,
    /// Largest `|recursion − enumeration|` of the transducer loss.
    pub max_rnnt_err: f64,
    /// Same for the label-path term of the FastEmit objective.
    pub max_label_err: f64,
}

/// Checks `count` random lattices; the first ones walk every
/// `(T, U, V)` up to the sweep limits, the rest draw dimensions at random.
pub fn rnnt_sweep(count: usize, seed: u64) -> Result<RnntSweep> {
    let mut dims = Vec::new();
    for t in 1..=SWEEP_MAX_FRAMES {
        for u in 0..=SWEEP_MAX_LABELS {
            for v in 2..=SWEEP_MAX_VOCAB {
                dims.push((t, u, v));
            }
        }
    }
    let mut out = RnntSweep {
        cases: 0,
        max_rnnt_err: 0.0,
        max_label_err: 0.0,
    };
    for i in 0..count {
        let mut rng = derived(seed, i as u64);
        let (t, u, v) = match dims.get(i) {
            Some(&d) => d,
            None => (
                rng.gen_range(1..=SWEEP_MAX_FRAMES),
                rng.gen_range(0..=SWEEP_MAX_LABELS),
                rng.gen_range(2..=SWEEP_MAX_VOCAB),
            ),
        };
        let lattice = random_lattice(&mut rng, t, u, v)?;
        let targets: Vec<usize> = (0..u).map(|_| rng.gen_range(1..v)).collect();
        let rnnt = rnnt_loss(&lattice, &targets)?;
        let fe = fastemit_loss(&lattice, &targets, 1.0)?;
        out.max_rnnt_err = out
            .max_rnnt_err
            .max((rnnt - brute_force_rnnt(&lattice, &targets)).abs());
        out.max_label_err = out
            .max_label_err
            .max((fe.label_paths - brute_force_label_paths(&lattice, &targets)).abs());
        out.cases += 1;
    }
    Ok(out)
}

/// Outcome of comparing [`build_mask`] with [`mask_entry`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskSweep {
    pub matrices: usize,
    pub mismatched_entries: usize,
    /// Full-chunk (`S = T`) masks that were not all ones.
    pub full_chunk_failures: usize,
}

/// Every `T ≤ max_frames`, `S ≤ T` and `P ≤ ⌈T/S⌉` (plus unlimited).
pub fn mask_sweep(max_frames: usize) -> Result<MaskSweep> {
    let mut out = MaskSweep {
        matrices: 0,
        mismatched_entries: 0,
        full_chunk_failures: 0,
    };
    for t in 1..=max_frames {
        for s in 1..=t {
            let lefts = (0..=t.div_ceil(s))
                .map(LeftContext::Chunks)
                .chain([LeftContext::Unlimited]);
            for left in lefts {
                let mask = build_mask(&ChunkSpec::new(s, left, t)?);
                out.matrices += 1;
                for i in 0..t {
                    for j in 0..t {
                        if mask.get(i, j) != mask_entry(i, j, s, left) {
                            out.mismatched_entries += 1;
                        }
                    }
                }
                if s == t && mask.as_slice().iter().any(|&m| !m) {
                    out.full_chunk_failures += 1;
                }
            }
        }
    }
    Ok(out)
}
