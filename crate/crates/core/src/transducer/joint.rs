use crate::autodiff::{Graph, Var};
use crate::nn::Linear;
use crate::params::{Bound, Init};
use crate::{Error, Real, Result};

/// `logits = W_out · tanh(P_enc(h) + P_pred(g))`.
#[derive(Clone, Debug)]
pub struct Joint {
    pub enc_proj: Linear,
    pub pred_proj: Linear,
    pub output: Linear,
}

impl Joint {
    pub fn new(
        init: &mut Init<'_>,
        enc_dim: usize,
        pred_dim: usize,
        joint_dim: usize,
        vocab: usize,
    ) -> Result<Self> {
        let mut s = init.scope("joint");
        Ok(Self {
            enc_proj: Linear::new(&mut s, "enc_proj", enc_dim, joint_dim, true)?,
            pred_proj: Linear::new(&mut s, "pred_proj", pred_dim, joint_dim, true)?,
            output: Linear::new(&mut s, "output", joint_dim, vocab, true)?,
        })
    }

    fn check(&self, g: &Graph<impl Real>, enc: Var, pred: Var) -> Result<()> {
        let (es, ps) = (g.shape(enc), g.shape(pred));
        if es.last() != Some(&self.enc_proj.in_dim) || ps.last() != Some(&self.pred_proj.in_dim) {
            return Err(Error::shape("joint", es, ps));
        }
        Ok(())
    }

    /// Logits `[1×V]` for one encoder row and one predictor row.
    pub fn logits<T: Real>(&self, g: &mut Graph<T>, p: &Bound, enc: Var, pred: Var) -> Result<Var> {
        self.check(g, enc, pred)?;
        let a = self.enc_proj.forward(g, p, enc)?;
        let b = self.pred_proj.forward(g, p, pred)?;
        let z = g.add(a, b)?;
        let z = g.tanh(z);
        self.output.forward(g, p, z)
    }

    /// Log-probabilities `[(T·(U+1))×V]` for every lattice node, row `t·(U+1)+u`.
    pub fn lattice<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        enc: Var,
        pred: Var,
    ) -> Result<Var> {
        self.check(g, enc, pred)?;
        let a = self.enc_proj.forward(g, p, enc)?;
        let b = self.pred_proj.forward(g, p, pred)?;
        let z = g.outer_add(a, b)?;
        let z = g.tanh(z);
        let logits = self.output.forward(g, p, z)?;
        g.log_softmax(logits)
    }
}
