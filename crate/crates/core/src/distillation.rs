//! Composite objective and teacher sentence-embedding providers.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use rand::Rng as _;

use crate::autodiff::{Graph, Var};
use crate::rng::{fnv1a64, seeded};
use crate::{Error, Real, Result, Tensor};

/// Source of sentence embeddings for full transcriptions.
pub trait TeacherProvider {
    fn dim(&self) -> usize;

    /// Embedding of the transcription `text` of utterance `utterance_id`.
    fn embed(&self, utterance_id: &str, text: &str) -> Result<Vec<f32>>;
}

/// Deterministic stand-in teacher: FNV-1a 64 of the text seeds the
/// generator, which fills a vector uniform in `[−1, 1)` that is then
/// scaled to unit length. Ignores the utterance id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HashTeacher {
    dim: usize,
}

impl HashTeacher {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter(
                "teacher dimension must be positive".into(),
            ));
        }
        Ok(Self { dim })
    }
}

impl TeacherProvider for HashTeacher {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, _utterance_id: &str, text: &str) -> Result<Vec<f32>> {
        let mut rng = seeded(fnv1a64(text.as_bytes()));
        let raw: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm = if norm > 0.0 { norm } else { 1.0 };
        Ok(raw.iter().map(|v| (v / norm) as f32).collect())
    }
}

/// Weights of the composite objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Distillation weight α.
    pub alpha: f64,
    /// FastEmit weight λ.
    pub lambda_fastemit: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            lambda_fastemit: 0.006,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.alpha, self.lambda_fastemit]
            .iter()
            .any(|w| w.is_nan() || *w < 0.0)
        {
            return Err(Error::Parameter(alloc::format!(
                "loss weights must be non-negative (alpha {}, lambda {})",
                self.alpha,
                self.lambda_fastemit
            )));
        }
        Ok(())
    }
}

/// Mean over chunks and dimensions of `(C − teacher)²`, recorded in the graph.
pub fn mse_loss<T: Real>(g: &mut Graph<T>, contexts: &[Var], teacher: &Tensor<T>) -> Result<Var> {
    if contexts.is_empty() {
        return Err(Error::Parameter(
            "distillation needs at least one chunk".into(),
        ));
    }
    let dim = teacher.len();
    for &c in contexts {
        if g.shape(c) != [1, dim] {
            return Err(Error::shape("mse_loss", g.shape(c), &[1, dim]));
        }
    }
    let stacked = if contexts.len() == 1 {
        contexts[0]
    } else {
        g.concat_rows(contexts)?
    };
    let t = g.constant(teacher.reshape(&[1, dim])?);
    let t = g.broadcast_rows(t, contexts.len())?;
    g.mse(stacked, t)
}

/// Value-only counterpart of [`mse_loss`].
pub fn mse_value(contexts: &[&[f32]], teacher: &[f32]) -> Result<f64> {
    if contexts.is_empty() {
        return Err(Error::Parameter(
            "distillation needs at least one chunk".into(),
        ));
    }
    let mut acc = 0.0;
    for c in contexts {
        if c.len() != teacher.len() {
            return Err(Error::shape("mse_loss", &[c.len()], &[teacher.len()]));
        }
        acc += c
            .iter()
            .zip(teacher)
            .map(|(&a, &b)| {
                let d = f64::from(a) - f64::from(b);
                d * d
            })
            .sum::<f64>();
    }
    Ok(acc / (contexts.len() * teacher.len()) as f64)
}

/// `rnnt + α · mse`.
pub fn total_loss(rnnt: f64, mse: f64, w: &LossWeights) -> f64 {
    rnnt + w.alpha * mse
}

/// Graph form of [`total_loss`].
pub fn total_loss_var<T: Real>(
    g: &mut Graph<T>,
    rnnt: Var,
    mse: Var,
    w: &LossWeights,
) -> Result<Var> {
    let weighted = g.scale(mse, T::of(w.alpha));
    g.add(rnnt, weighted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse_value(&[&[0.0, 0.0]], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mse_value(&[&[0.0], &[2.0]], &[1.0]).unwrap(), 1.0);
        assert_eq!(
            mse_value(&[&[0.3, 0.4], &[0.3, 0.4]], &[0.3, 0.4]).unwrap(),
            0.0
        );
        assert!(mse_value(&[&[0.0]], &[1.0, 1.0]).is_err());
        assert!(mse_value(&[], &[1.0]).is_err());
    }

    #[test]
    fn graph_mse_matches_values() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::new(&[1, 1], alloc::vec![0.0]).unwrap());
        let b = g.constant(Tensor::new(&[1, 1], alloc::vec![2.0]).unwrap());
        let l = mse_loss(
            &mut g,
            &[a, b],
            &Tensor::new(&[1], alloc::vec![1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(g.value(l).item(), 1.0);
    }

    #[test]
    fn total_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(total_loss(2.0, 0.0, &w), 2.0);
        assert!((total_loss(2.0, 1.0, &w) - 2.2).abs() < 1e-12);
        let off = LossWeights { alpha: 0.0, ..w };
        assert_eq!(total_loss(0.0, 3.0, &off), 0.0);
        assert!(LossWeights { alpha: -1.0, ..w }.validate().is_err());
    }

    #[test]
    fn hash_teacher_is_stable_unit_length() {
        let t = HashTeacher::new(16).unwrap();
        let a = t.embed("x", "cat sees dog").unwrap();
        let b = t.embed("y", "cat sees dog").unwrap();
        assert_eq!(a, b);
        let n: f64 = a.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
        assert!((n - 1.0).abs() < 1e-5);
        assert_ne!(a, t.embed("x", "dog sees cat").unwrap());
    }
}
