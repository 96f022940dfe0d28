use alloc::vec::Vec;

use super::vocab::BLANK;
use crate::autodiff::{Graph, Var};
use crate::nn::Lstm;
use crate::params::{Bound, Init, ParamId};
use crate::{Error, Real, Result, Tensor};

/// Label-history network: token embedding followed by one LSTM layer.
///
/// The blank row of the embedding table doubles as the start-of-sequence
/// input.
#[derive(Clone, Debug)]
pub struct Predictor {
    pub embedding: ParamId,
    pub lstm: Lstm,
    pub vocab_size: usize,
    pub hidden: usize,
}

/// LSTM hidden and cell vectors between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorState<T> {
    pub hidden: Tensor<T>,
    pub cell: Tensor<T>,
}

impl<T: Real> PredictorState<T> {
    pub fn reset(hidden: usize) -> Self {
        Self {
            hidden: Tensor::zeros(&[1, hidden]),
            cell: Tensor::zeros(&[1, hidden]),
        }
    }
}

impl Predictor {
    pub fn new(init: &mut Init<'_>, vocab_size: usize, hidden: usize) -> Result<Self> {
        let mut s = init.scope("predictor");
        let bound = num_traits::Float::sqrt(1.0 / hidden as f32);
        Ok(Self {
            embedding: s.uniform("embedding", &[vocab_size, hidden], bound)?,
            lstm: Lstm::new(&mut s, "lstm", hidden, hidden)?,
            vocab_size,
            hidden,
        })
    }

    fn check_token(&self, token: usize) -> Result<()> {
        if token >= self.vocab_size {
            return Err(Error::Vocabulary(alloc::format!(
                "token id {token} outside vocabulary of {}",
                self.vocab_size
            )));
        }
        Ok(())
    }

    /// One step inside a graph: returns the output `[1×hidden]` and new `(h, c)`.
    pub fn step_var<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        token: usize,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var)> {
        self.check_token(token)?;
        let x = g.embedding(p[self.embedding], &[token])?;
        self.lstm.step(g, p, x, h, c)
    }

    /// One step from a stored state. The output is the new hidden vector.
    pub fn step<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        token: usize,
        state: &PredictorState<T>,
    ) -> Result<(Var, PredictorState<T>)> {
        let h = g.constant(state.hidden.clone());
        let c = g.constant(state.cell.clone());
        let (h, c) = self.step_var(g, p, token, h, c)?;
        let next = PredictorState {
            hidden: g.value(h).clone(),
            cell: g.value(c).clone(),
        };
        Ok((h, next))
    }

    /// Outputs `[(U+1)×hidden]` after consuming start, y₁ … y_U.
    pub fn sequence<T: Real>(&self, g: &mut Graph<T>, p: &Bound, targets: &[usize]) -> Result<Var> {
        let zeros = Tensor::zeros(&[1, self.hidden]);
        let mut h = g.constant(zeros.clone());
        let mut c = g.constant(zeros);
        let mut outs = Vec::with_capacity(targets.len() + 1);
        for &tok in core::iter::once(&BLANK).chain(targets) {
            let (nh, nc) = self.step_var(g, p, tok, h, c)?;
            outs.push(nh);
            h = nh;
            c = nc;
        }
        if outs.len() == 1 {
            Ok(outs[0])
        } else {
            g.concat_rows(&outs)
        }
    }
}
