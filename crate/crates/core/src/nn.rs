//! Layers shared by the encoder, context module and transducer heads.

use alloc::vec::Vec;

use crate::autodiff::{Graph, Var};
use crate::params::{Bound, Init, ParamId};
use crate::{Error, Real, Result};

pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        init: &mut Init<'_>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
    ) -> Result<Self> {
        let mut s = init.scope(name);
        let w = s.weight("weight", in_dim, out_dim)?;
        let b = if bias {
            Some(s.constant("bias", &[out_dim], 0.0)?)
        } else {
            None
        };
        Ok(Self {
            w,
            b,
            in_dim,
            out_dim,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        g.linear(x, p[self.w], self.b.map(|b| p[b]))
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(init: &mut Init<'_>, name: &str, dim: usize) -> Result<Self> {
        let mut s = init.scope(name);
        Ok(Self {
            gamma: s.constant("gamma", &[dim], 1.0)?,
            beta: s.constant("beta", &[dim], 0.0)?,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        g.layer_norm(x, p[self.gamma], p[self.beta], T::of(LN_EPS))
    }
}

/// Pre-normalized position-wise feed-forward block (without the residual).
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub norm: LayerNorm,
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(init: &mut Init<'_>, name: &str, dim: usize, hidden: usize) -> Result<Self> {
        let mut s = init.scope(name);
        Ok(Self {
            norm: LayerNorm::new(&mut s, "norm", dim)?,
            up: Linear::new(&mut s, "up", dim, hidden, true)?,
            down: Linear::new(&mut s, "down", hidden, dim, true)?,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let h = self.norm.forward(g, p, x)?;
        let h = self.up.forward(g, p, h)?;
        let h = g.swish(h);
        self.down.forward(g, p, h)
    }
}

/// Multi-head scaled dot-product attention.
///
/// Key/value projection is split from the attention step so callers can cache
/// projected keys and values across streaming chunks.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new(init: &mut Init<'_>, name: &str, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Parameter(alloc::format!(
                "model dimension {dim} is not divisible by {heads} heads"
            )));
        }
        let mut s = init.scope(name);
        Ok(Self {
            query: Linear::new(&mut s, "query", dim, dim, true)?,
            key: Linear::new(&mut s, "key", dim, dim, true)?,
            value: Linear::new(&mut s, "value", dim, dim, true)?,
            output: Linear::new(&mut s, "output", dim, dim, true)?,
            heads,
            dim,
        })
    }

    pub fn project_kv<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        memory: Var,
    ) -> Result<(Var, Var)> {
        Ok((
            self.key.forward(g, p, memory)?,
            self.value.forward(g, p, memory)?,
        ))
    }

    /// Attends queries `x[m×d]` over `keys`, `values` `[n×d]`; `mask` is
    /// `m×n` (or a shared row of length `n`).
    pub fn attend<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x: Var,
        keys: Var,
        values: Var,
        mask: &[bool],
    ) -> Result<Var> {
        let q = self.query.forward(g, p, x)?;
        let dk = self.dim / self.heads;
        let scale = T::one() / T::of(dk as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dk, dk)?;
            let kh = g.slice_cols(keys, h * dk, dk)?;
            let vh = g.slice_cols(values, h * dk, dk)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale);
            let attn = g.masked_softmax(scores, mask)?;
            outs.push(g.matmul(attn, vh)?);
        }
        let merged = if outs.len() == 1 {
            outs[0]
        } else {
            g.concat_cols(&outs)?
        };
        self.output.forward(g, p, merged)
    }
}

/// Conformer convolution block (without the residual): pointwise expansion,
/// GLU, causal depthwise convolution, normalization, swish, pointwise.
#[derive(Clone, Debug)]
pub struct ConvModule {
    pub norm: LayerNorm,
    pub expand: Linear,
    pub depthwise_w: ParamId,
    pub depthwise_b: ParamId,
    pub post_norm: LayerNorm,
    pub project: Linear,
    pub kernel: usize,
}

impl ConvModule {
    pub fn new(init: &mut Init<'_>, name: &str, dim: usize, kernel: usize) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::Parameter(alloc::format!(
                "convolution kernel must be odd, got {kernel}"
            )));
        }
        let mut s = init.scope(name);
        let bound = num_traits::Float::sqrt(1.0 / kernel as f32);
        Ok(Self {
            norm: LayerNorm::new(&mut s, "norm", dim)?,
            expand: Linear::new(&mut s, "expand", dim, 2 * dim, true)?,
            depthwise_w: s.uniform("depthwise.weight", &[kernel, dim], bound)?,
            depthwise_b: s.constant("depthwise.bias", &[dim], 0.0)?,
            post_norm: LayerNorm::new(&mut s, "post_norm", dim)?,
            project: Linear::new(&mut s, "project", dim, dim, true)?,
            kernel,
        })
    }

    /// Returns the block output and the depthwise-convolution input rows of
    /// `x` (what a streaming caller keeps as history).
    ///
    /// `history` holds up to `kernel − 1` depthwise-input rows preceding `x`.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x: Var,
        history: Option<Var>,
    ) -> Result<(Var, Var)> {
        let rows = g.shape(x)[0];
        let h = self.norm.forward(g, p, x)?;
        let h = self.expand.forward(g, p, h)?;
        let conv_in = g.glu(h)?;
        let (full, offset) = match history {
            Some(hist) => (g.concat_rows(&[hist, conv_in])?, g.shape(hist)[0]),
            None => (conv_in, 0),
        };
        let y = g.causal_depthwise_conv(full, p[self.depthwise_w], p[self.depthwise_b])?;
        let y = if offset > 0 {
            g.slice_rows(y, offset, rows)?
        } else {
            y
        };
        let y = self.post_norm.forward(g, p, y)?;
        let y = g.swish(y);
        Ok((self.project.forward(g, p, y)?, conv_in))
    }
}

/// Single-layer LSTM cell with gate order input, forget, cell, output.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(init: &mut Init<'_>, name: &str, input_dim: usize, hidden: usize) -> Result<Self> {
        let mut s = init.scope(name);
        Ok(Self {
            w_input: s.weight("w_input", input_dim, 4 * hidden)?,
            w_hidden: s.weight("w_hidden", hidden, 4 * hidden)?,
            bias: s.constant("bias", &[4 * hidden], 0.0)?,
            input_dim,
            hidden,
        })
    }

    /// One step on `x[1×input]` with state `(h, c)` each `[1×hidden]`.
    pub fn step<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var)> {
        let xi = g.matmul(x, p[self.w_input])?;
        let hh = g.matmul(h, p[self.w_hidden])?;
        let z = g.add(xi, hh)?;
        let z = g.add_row(z, p[self.bias])?;
        let n = self.hidden;
        let i = g.slice_cols(z, 0, n)?;
        let f = g.slice_cols(z, n, n)?;
        let cand = g.slice_cols(z, 2 * n, n)?;
        let o = g.slice_cols(z, 3 * n, n)?;
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let cand = g.tanh(cand);
        let o = g.sigmoid(o);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_new = g.add(keep, write)?;
        let tc = g.tanh(c_new);
        let h_new = g.mul(o, tc)?;
        Ok((h_new, c_new))
    }
}
