//! Transducer lattice loss.
//!
//! Node `(t, u)` means `t` frames consumed and `u` labels emitted. From there a
//! blank moves to `(t+1, u)` and the next label `y_{u+1}` moves to `(t, u+1)`.
//! Every alignment starts at `(0, 0)` and ends with the blank leaving
//! `(T−1, U)`. All recursions run in log space at 64-bit.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use super::vocab::{check_targets, BLANK};
use crate::autodiff::{Graph, Var};
use crate::{Error, Real, Result, Tensor};

/// Log-probabilities at every lattice node, laid out `[T][U+1][V]`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointLattice {
    frames: usize,
    label_positions: usize,
    vocab: usize,
    log_probs: Vec<f64>,
}

impl JointLattice {
    pub fn new(
        frames: usize,
        label_positions: usize,
        vocab: usize,
        log_probs: Vec<f64>,
    ) -> Result<Self> {
        if frames == 0 || label_positions == 0 || vocab < 2 {
            return Err(Error::Parameter(alloc::format!(
                "lattice needs T ≥ 1, U+1 ≥ 1, V ≥ 2 (got {frames}, {label_positions}, {vocab})"
            )));
        }
        if log_probs.len() != frames * label_positions * vocab {
            return Err(Error::shape(
                "lattice",
                &[frames, label_positions, vocab],
                &[log_probs.len()],
            ));
        }
        Ok(Self {
            frames,
            label_positions,
            vocab,
            log_probs,
        })
    }

    /// From a `[(T·(U+1))×V]` tensor of log-probabilities.
    pub fn from_tensor<T: Real>(
        t: &Tensor<T>,
        frames: usize,
        label_positions: usize,
    ) -> Result<Self> {
        let (rows, vocab) = t.dims2();
        if rows != frames * label_positions {
            return Err(Error::shape(
                "lattice",
                &[frames, label_positions],
                t.shape(),
            ));
        }
        Self::new(
            frames,
            label_positions,
            vocab,
            t.data().iter().map(|x| x.as_f64()).collect(),
        )
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn label_positions(&self) -> usize {
        self.label_positions
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    fn idx(&self, t: usize, u: usize, k: usize) -> usize {
        (t * self.label_positions + u) * self.vocab + k
    }

    pub fn log_prob(&self, t: usize, u: usize, k: usize) -> f64 {
        self.log_probs[self.idx(t, u, k)]
    }

    /// Whether every node's distribution sums to one within `tol`.
    pub fn is_normalized(&self, tol: f64) -> bool {
        self.log_probs
            .chunks(self.vocab)
            .all(|row| (row.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() <= tol)
    }

    fn check(&self, targets: &[usize]) -> Result<()> {
        if targets.len() + 1 != self.label_positions {
            return Err(Error::shape(
                "rnnt_loss",
                &[self.label_positions],
                &[targets.len() + 1],
            ));
        }
        check_targets(targets, self.vocab)
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Forward and backward log-variables of one lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeVariables {
    pub frames: usize,
    pub label_positions: usize,
    /// `α(t,u)`: log-probability of reaching `(t,u)`.
    pub alpha: Vec<f64>,
    /// `β(t,u)`: log-probability of finishing from `(t,u)`, final blank included.
    pub beta: Vec<f64>,
    pub log_likelihood: f64,
}

impl LatticeVariables {
    pub fn alpha(&self, t: usize, u: usize) -> f64 {
        self.alpha[t * self.label_positions + u]
    }

    pub fn beta(&self, t: usize, u: usize) -> f64 {
        self.beta[t * self.label_positions + u]
    }
}

/// Generic alignment recursion over per-node blank and label log-weights.
fn recursion(
    frames: usize,
    label_positions: usize,
    blank: impl Fn(usize, usize) -> f64,
    label: impl Fn(usize, usize) -> f64,
) -> LatticeVariables {
    let (tn, un) = (frames, label_positions);
    let at = |t: usize, u: usize| t * un + u;
    let mut alpha = vec![f64::NEG_INFINITY; tn * un];
    alpha[0] = 0.0;
    for t in 0..tn {
        for u in 0..un {
            if t == 0 && u == 0 {
                continue;
            }
            let mut a = f64::NEG_INFINITY;
            if t > 0 {
                a = log_add(a, alpha[at(t - 1, u)] + blank(t - 1, u));
            }
            if u > 0 {
                a = log_add(a, alpha[at(t, u - 1)] + label(t, u - 1));
            }
            alpha[at(t, u)] = a;
        }
    }
    let mut beta = vec![f64::NEG_INFINITY; tn * un];
    beta[at(tn - 1, un - 1)] = blank(tn - 1, un - 1);
    for t in (0..tn).rev() {
        for u in (0..un).rev() {
            if t == tn - 1 && u == un - 1 {
                continue;
            }
            let mut b = f64::NEG_INFINITY;
            if t + 1 < tn {
                b = log_add(b, beta[at(t + 1, u)] + blank(t, u));
            }
            if u + 1 < un {
                b = log_add(b, beta[at(t, u + 1)] + label(t, u));
            }
            beta[at(t, u)] = b;
        }
    }
    let log_likelihood = alpha[at(tn - 1, un - 1)] + blank(tn - 1, un - 1);
    LatticeVariables {
        frames,
        label_positions,
        alpha,
        beta,
        log_likelihood,
    }
}

/// Gradient of `−log P` with respect to every lattice log-probability.
fn recursion_grad(
    lattice: &JointLattice,
    targets: &[usize],
    vars: &LatticeVariables,
    include_blank: bool,
) -> Vec<f64> {
    let (tn, un) = (lattice.frames, lattice.label_positions);
    let mut grad = vec![0.0; lattice.log_probs.len()];
    let lp = vars.log_likelihood;
    for t in 0..tn {
        for u in 0..un {
            let a = vars.alpha(t, u);
            if include_blank {
                let after = if t + 1 < tn {
                    Some(vars.beta(t + 1, u))
                } else if u + 1 == un {
                    Some(0.0)
                } else {
                    None
                };
                if let Some(b) = after {
                    let i = lattice.idx(t, u, BLANK);
                    grad[i] = -(a + lattice.log_probs[i] + b - lp).exp();
                }
            }
            if let Some(&k) = targets.get(u) {
                let i = lattice.idx(t, u, k);
                grad[i] = -(a + lattice.log_probs[i] + vars.beta(t, u + 1) - lp).exp();
            }
        }
    }
    grad
}

/// α/β variables of the standard transducer lattice.
pub fn forward_backward(lattice: &JointLattice, targets: &[usize]) -> Result<LatticeVariables> {
    lattice.check(targets)?;
    Ok(recursion(
        lattice.frames,
        lattice.label_positions,
        |t, u| lattice.log_prob(t, u, BLANK),
        |t, u| lattice.log_prob(t, u, targets[u]),
    ))
}

/// `−log Σ_alignments Π p`.
pub fn rnnt_loss(lattice: &JointLattice, targets: &[usize]) -> Result<f64> {
    Ok(-forward_backward(lattice, targets)?.log_likelihood)
}

/// Loss and its gradient with respect to the lattice log-probabilities.
pub fn rnnt_loss_with_grad(lattice: &JointLattice, targets: &[usize]) -> Result<(f64, Vec<f64>)> {
    let vars = forward_backward(lattice, targets)?;
    let grad = recursion_grad(lattice, targets, &vars, true);
    Ok((-vars.log_likelihood, grad))
}

/// `−log Σ_alignments Π_{label arcs} p`: the alignment sum with blank arcs
/// weighted one, so only label-emission probabilities contribute.
pub fn label_path_loss(lattice: &JointLattice, targets: &[usize]) -> Result<f64> {
    Ok(label_path_loss_with_grad(lattice, targets)?.0)
}

fn label_path_loss_with_grad(lattice: &JointLattice, targets: &[usize]) -> Result<(f64, Vec<f64>)> {
    lattice.check(targets)?;
    let vars = recursion(
        lattice.frames,
        lattice.label_positions,
        |_, _| 0.0,
        |t, u| lattice.log_prob(t, u, targets[u]),
    );
    let grad = recursion_grad(lattice, targets, &vars, false);
    Ok((-vars.log_likelihood, grad))
}

/// Components of the FastEmit-regularized objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FastEmitLoss {
    pub total: f64,
    pub rnnt: f64,
    pub label_paths: f64,
}

/// `rnnt + λ · label_paths`. With `λ = 0` the total is exactly the plain loss.
pub fn fastemit_loss(
    lattice: &JointLattice,
    targets: &[usize],
    lambda: f64,
) -> Result<FastEmitLoss> {
    Ok(fastemit_with_grad(lattice, targets, lambda)?.0)
}

fn fastemit_with_grad(
    lattice: &JointLattice,
    targets: &[usize],
    lambda: f64,
) -> Result<(FastEmitLoss, Vec<f64>)> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Parameter(alloc::format!(
            "FastEmit λ must be ≥ 0, got {lambda}"
        )));
    }
    let (rnnt, mut grad) = rnnt_loss_with_grad(lattice, targets)?;
    if lambda == 0.0 {
        return Ok((
            FastEmitLoss {
                total: rnnt,
                rnnt,
                label_paths: 0.0,
            },
            grad,
        ));
    }
    let (label_paths, lgrad) = label_path_loss_with_grad(lattice, targets)?;
    for (g, l) in grad.iter_mut().zip(lgrad) {
        *g += lambda * l;
    }
    Ok((
        FastEmitLoss {
            total: rnnt + lambda * label_paths,
            rnnt,
            label_paths,
        },
        grad,
    ))
}

/// Records the FastEmit-regularized lattice loss of `log_probs`
/// `[(T·(U+1))×V]` as a differentiable scalar of the graph.
pub fn lattice_loss_var<T: Real>(
    g: &mut Graph<T>,
    log_probs: Var,
    frames: usize,
    targets: &[usize],
    lambda: f64,
) -> Result<(Var, FastEmitLoss)> {
    let lattice = JointLattice::from_tensor(g.value(log_probs), frames, targets.len() + 1)?;
    let (loss, grad) = fastemit_with_grad(&lattice, targets, lambda)?;
    let grad = grad.into_iter().map(T::of).collect();
    let v = g.precomputed_scalar(log_probs, T::of(loss.total), grad)?;
    Ok((v, loss))
}
