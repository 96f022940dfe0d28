//! Per-chunk semantic context embeddings.
//!
//! A learned query attention-pools the frame-embeddings of the past chunks
//! through a small stack of cross-attention decoder layers and is projected to
//! the teacher embedding dimension. The result is concatenated onto every
//! frame-embedding of the current chunk.

use alloc::vec::Vec;

use crate::autodiff::{Graph, Var};
use crate::chunk_mask::{ChunkSpec, LeftContext};
use crate::nn::{FeedForward, LayerNorm, Linear, MultiHeadAttention};
use crate::params::{Bound, Init, ParamId};
use crate::{Error, Real, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ContextConfig {
    pub num_decoder_layers: usize,
    pub teacher_dim: usize,
    /// How many past chunks the context module may look at.
    pub window: LeftContext,
    pub num_heads: usize,
    pub ffn_dim: usize,
}

impl ContextConfig {
    pub fn desk() -> Self {
        Self {
            num_decoder_layers: 2,
            teacher_dim: 16,
            window: LeftContext::Unlimited,
            num_heads: 2,
            ffn_dim: 64,
        }
    }

    /// 3 decoder layers projected to 768 dimensions.
    pub fn published() -> Self {
        Self {
            num_decoder_layers: 3,
            teacher_dim: 768,
            window: LeftContext::Unlimited,
            num_heads: 8,
            ffn_dim: 2048,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.teacher_dim == 0 || self.num_decoder_layers == 0 {
            return Err(Error::Parameter(
                "context module needs teacher_dim > 0 and at least one decoder layer".into(),
            ));
        }
        if let LeftContext::Chunks(0) = self.window {
            return Err(Error::Parameter(
                "context window must cover at least one chunk".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub cross_norm: LayerNorm,
    pub cross: MultiHeadAttention,
    pub ffn: FeedForward,
}

#[derive(Clone, Debug)]
pub struct ContextModule {
    pub config: ContextConfig,
    pub query: ParamId,
    pub layers: Vec<DecoderLayer>,
    pub projection: Linear,
}

impl ContextModule {
    pub fn new(init: &mut Init<'_>, config: &ContextConfig, d_model: usize) -> Result<Self> {
        config.validate()?;
        let mut s = init.scope("context");
        let bound = num_traits::Float::sqrt(1.0 / d_model as f32);
        let query = s.uniform("query", &[1, d_model], bound)?;
        let layers = (0..config.num_decoder_layers)
            .map(|i| {
                let mut l = s.scope(&alloc::format!("layers.{i}"));
                Ok(DecoderLayer {
                    cross_norm: LayerNorm::new(&mut l, "cross_norm", d_model)?,
                    cross: MultiHeadAttention::new(&mut l, "cross", d_model, config.num_heads)?,
                    ffn: FeedForward::new(&mut l, "ffn", d_model, config.ffn_dim)?,
                })
            })
            .collect::<Result<_>>()?;
        let projection = Linear::new(&mut s, "projection", d_model, config.teacher_dim, true)?;
        Ok(Self {
            config: config.clone(),
            query,
            layers,
            projection,
        })
    }

    /// Context embedding `[1×teacher_dim]` from the past frame-embeddings.
    ///
    /// With no past (the first chunk) the bare learned query is projected.
    pub fn compute<T: Real>(&self, g: &mut Graph<T>, p: &Bound, past: Option<Var>) -> Result<Var> {
        let mut q = p[self.query];
        if let Some(memory) = past {
            let n = g.shape(memory)[0];
            let mask = alloc::vec![true; n];
            for layer in &self.layers {
                let qn = layer.cross_norm.forward(g, p, q)?;
                let (k, v) = layer.cross.project_kv(g, p, memory)?;
                let a = layer.cross.attend(g, p, qn, k, v, &mask)?;
                q = g.add(q, a)?;
                let f = layer.ffn.forward(g, p, q)?;
                q = g.add(q, f)?;
            }
        }
        self.projection.forward(g, p, q)
    }

    /// Chunks whose frames feed the context of chunk `chunk`.
    pub fn window(&self, chunk: usize) -> core::ops::Range<usize> {
        self.config.window.first_chunk(chunk)..chunk
    }

    /// Enriches every frame of `h[T×d]` with its chunk's context embedding.
    ///
    /// Returns `[T×(d+teacher_dim)]` and the per-chunk context embeddings.
    pub fn enrich<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        h: Var,
        spec: &ChunkSpec,
    ) -> Result<(Var, Vec<Var>)> {
        self.enrich_with_window(g, p, h, spec, self.config.window)
    }

    /// [`enrich`](Self::enrich) with an explicit context window.
    pub fn enrich_with_window<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        h: Var,
        spec: &ChunkSpec,
        window: LeftContext,
    ) -> Result<(Var, Vec<Var>)> {
        if let LeftContext::Chunks(0) = window {
            return Err(Error::Parameter(
                "context window must cover at least one chunk".into(),
            ));
        }
        let frames = g.shape(h)[0];
        if frames != spec.total_frames() {
            return Err(Error::shape("enrich", &[frames], &[spec.total_frames()]));
        }
        let mut rows = Vec::with_capacity(spec.num_chunks());
        let mut contexts = Vec::with_capacity(spec.num_chunks());
        for chunk in 0..spec.num_chunks() {
            let past_chunks = window.first_chunk(chunk)..chunk;
            let past = if past_chunks.is_empty() {
                None
            } else {
                let start = past_chunks.start * spec.chunk_size();
                let end = past_chunks.end * spec.chunk_size();
                Some(g.slice_rows(h, start, end - start)?)
            };
            let c = self.compute(g, p, past)?;
            let range = spec.chunk_frames(chunk);
            let block = g.slice_rows(h, range.start, range.len())?;
            rows.push(attach_context(g, block, c)?);
            contexts.push(c);
        }
        let enriched = if rows.len() == 1 {
            rows[0]
        } else {
            g.concat_rows(&rows)?
        };
        Ok((enriched, contexts))
    }
}

/// `[s×d] ⊕ [1×c] → [s×(d+c)]`, the same context on every row.
pub fn attach_context<T: Real>(g: &mut Graph<T>, h_chunk: Var, context: Var) -> Result<Var> {
    let s = g.shape(h_chunk);
    if s.len() != 2 {
        return Err(Error::shape("attach_context", s, g.shape(context)));
    }
    let rows = s[0];
    let (crow, _) = g.value(context).dims2();
    if crow != 1 {
        return Err(Error::shape(
            "attach_context",
            g.shape(h_chunk),
            g.shape(context),
        ));
    }
    let c = g.broadcast_rows(context, rows)?;
    g.concat_cols(&[h_chunk, c])
}
