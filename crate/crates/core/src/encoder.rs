//! Convolutional frontend and chunk-masked conformer encoder.

use alloc::vec::Vec;

use crate::autodiff::{Graph, Var};
use crate::chunk_mask::MaskMatrix;
use crate::nn::{ConvModule, FeedForward, LayerNorm, Linear, MultiHeadAttention};
use crate::params::{Bound, Init, ParamId};
use crate::{Error, Real, Result};

/// Frame-rate reduction of the frontend (two stride-2 convolutions).
pub const DOWNSAMPLE: usize = 4;

/// Encoder frame count produced from `raw` feature frames.
pub fn frames_after_frontend(raw: usize) -> usize {
    raw.div_ceil(DOWNSAMPLE)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub feat_dim: usize,
    pub num_layers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub conv_kernel: usize,
    /// Size of the learned absolute position table.
    pub max_positions: usize,
}

impl EncoderConfig {
    pub fn desk(feat_dim: usize) -> Self {
        Self {
            feat_dim,
            num_layers: 2,
            d_model: 32,
            num_heads: 2,
            ffn_dim: 64,
            conv_kernel: 7,
            max_positions: 512,
        }
    }

    /// 12 layers, d=512, 8 heads, FFN 2048, kernel 31.
    pub fn published(feat_dim: usize) -> Self {
        Self {
            feat_dim,
            num_layers: 12,
            d_model: 512,
            num_heads: 8,
            ffn_dim: 2048,
            conv_kernel: 31,
            max_positions: 4096,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || !self.d_model.is_multiple_of(self.num_heads) {
            return Err(Error::Parameter(alloc::format!(
                "d_model {} must be divisible by num_heads {}",
                self.d_model,
                self.num_heads
            )));
        }
        if self.conv_kernel.is_multiple_of(2) {
            return Err(Error::Parameter(alloc::format!(
                "conv_kernel {} must be odd",
                self.conv_kernel
            )));
        }
        if self.feat_dim == 0 || self.d_model == 0 || self.ffn_dim == 0 || self.max_positions == 0 {
            return Err(Error::Parameter(
                "encoder dimensions must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ConformerLayer {
    pub ffn_in: FeedForward,
    pub attn_norm: LayerNorm,
    pub attn: MultiHeadAttention,
    pub conv: ConvModule,
    pub ffn_out: FeedForward,
    pub final_norm: LayerNorm,
}

/// Result of one conformer layer over a block of frames.
#[derive(Clone, Copy, Debug)]
pub struct LayerStep {
    pub output: Var,
    /// Keys and values of the block's own frames.
    pub keys: Var,
    pub values: Var,
    /// Depthwise-convolution input rows of the block.
    pub conv_input: Var,
}

impl ConformerLayer {
    fn new(init: &mut Init<'_>, name: &str, cfg: &EncoderConfig) -> Result<Self> {
        let mut s = init.scope(name);
        let d = cfg.d_model;
        Ok(Self {
            ffn_in: FeedForward::new(&mut s, "ffn_in", d, cfg.ffn_dim)?,
            attn_norm: LayerNorm::new(&mut s, "attn_norm", d)?,
            attn: MultiHeadAttention::new(&mut s, "attn", d, cfg.num_heads)?,
            conv: ConvModule::new(&mut s, "conv", d, cfg.conv_kernel)?,
            ffn_out: FeedForward::new(&mut s, "ffn_out", d, cfg.ffn_dim)?,
            final_norm: LayerNorm::new(&mut s, "final_norm", d)?,
        })
    }

    /// Macaron block: ½FFN, self-attention, convolution, ½FFN, layer norm.
    ///
    /// `past` carries cached keys/values that precede `x`; `mask` has one row
    /// per frame of `x` and one column per key (past first, then `x`).
    pub fn step<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x: Var,
        past: Option<(Var, Var)>,
        mask: &[bool],
        conv_history: Option<Var>,
    ) -> Result<LayerStep> {
        let half = T::of(0.5);
        let f = self.ffn_in.forward(g, p, x)?;
        let f = g.scale(f, half);
        let x1 = g.add(x, f)?;

        let a_in = self.attn_norm.forward(g, p, x1)?;
        let (k, v) = self.attn.project_kv(g, p, a_in)?;
        let (keys, values) = match past {
            Some((pk, pv)) => (g.concat_rows(&[pk, k])?, g.concat_rows(&[pv, v])?),
            None => (k, v),
        };
        let a = self.attn.attend(g, p, a_in, keys, values, mask)?;
        let x2 = g.add(x1, a)?;

        let (c, conv_input) = self.conv.forward(g, p, x2, conv_history)?;
        let x3 = g.add(x2, c)?;

        let f = self.ffn_out.forward(g, p, x3)?;
        let f = g.scale(f, half);
        let x4 = g.add(x3, f)?;
        let output = self.final_norm.forward(g, p, x4)?;
        Ok(LayerStep {
            output,
            keys: k,
            values: v,
            conv_input,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub conv1: Linear,
    pub conv2: Linear,
    pub input_proj: Linear,
    pub positions: ParamId,
    pub layers: Vec<ConformerLayer>,
}

impl Encoder {
    pub fn new(init: &mut Init<'_>, config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut s = init.scope("encoder");
        let d = config.d_model;
        let conv1 = Linear::new(&mut s, "frontend.conv1", 2 * config.feat_dim, d, true)?;
        let conv2 = Linear::new(&mut s, "frontend.conv2", 2 * d, d, true)?;
        let input_proj = Linear::new(&mut s, "frontend.proj", d, d, true)?;
        let bound = num_traits::Float::sqrt(1.0 / d as f32);
        let positions = s.uniform("positions", &[config.max_positions, d], bound)?;
        let layers = (0..config.num_layers)
            .map(|i| ConformerLayer::new(&mut s, &alloc::format!("layers.{i}"), config))
            .collect::<Result<_>>()?;
        Ok(Self {
            config: config.clone(),
            conv1,
            conv2,
            input_proj,
            positions,
            layers,
        })
    }

    /// Kernel-2 stride-2 convolution: pairs of rows (zero-padded at the end)
    /// are flattened and mapped linearly.
    fn strided_conv<T: Real>(g: &mut Graph<T>, p: &Bound, conv: &Linear, x: Var) -> Result<Var> {
        let (rows, cols) = (g.shape(x)[0], g.shape(x)[1]);
        let x = g.pad_rows(x, rows % 2)?;
        let pairs = g.reshape(x, &[rows.div_ceil(2), 2 * cols])?;
        conv.forward(g, p, pairs)
    }

    /// Frontend without the minimum-length check; used for trailing remainders.
    pub(crate) fn frontend<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let s = g.shape(x);
        if s.len() != 2 || s[1] != self.config.feat_dim {
            return Err(Error::shape("frontend", s, &[self.config.feat_dim]));
        }
        let h = Self::strided_conv(g, p, &self.conv1, x)?;
        let h = g.relu(h);
        let h = Self::strided_conv(g, p, &self.conv2, h)?;
        let h = g.relu(h);
        self.input_proj.forward(g, p, h)
    }

    /// `X[raw_T×feat] → [⌈raw_T/4⌉×d_model]`.
    pub fn frontend_downsample<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let raw = g.shape(x)[0];
        if raw < DOWNSAMPLE {
            return Err(Error::InputTooShort(alloc::format!(
                "{raw} raw frames, need at least {DOWNSAMPLE}"
            )));
        }
        self.frontend(g, p, x)
    }

    /// Adds learned absolute positions `offset..offset+rows`.
    pub fn add_positions<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x: Var,
        offset: usize,
    ) -> Result<Var> {
        let rows = g.shape(x)[0];
        if offset + rows > self.config.max_positions {
            return Err(Error::Parameter(alloc::format!(
                "sequence of {} frames exceeds max_positions {}",
                offset + rows,
                self.config.max_positions
            )));
        }
        let ids: Vec<usize> = (offset..offset + rows).collect();
        let pos = g.embedding(p[self.positions], &ids)?;
        g.add(x, pos)
    }

    /// Full offline forward pass: raw features to frame-embeddings `H`.
    pub fn encode<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x: Var,
        mask: &MaskMatrix,
    ) -> Result<Var> {
        let h = self.frontend_downsample(g, p, x)?;
        let frames = g.shape(h)[0];
        if mask.size() != frames {
            return Err(Error::shape(
                "encode",
                &[mask.size(), mask.size()],
                &[frames, frames],
            ));
        }
        let h = self.add_positions(g, p, h, 0)?;
        self.encode_frames(g, p, h, mask)
    }

    /// Conformer stack over already-downsampled, position-tagged frames.
    pub fn encode_frames<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        h: Var,
        mask: &MaskMatrix,
    ) -> Result<Var> {
        let frames = g.shape(h)[0];
        if mask.size() != frames {
            return Err(Error::shape(
                "encode",
                &[mask.size(), mask.size()],
                &[frames, frames],
            ));
        }
        let mut h = h;
        for layer in &self.layers {
            h = layer.step(g, p, h, None, mask.as_slice(), None)?.output;
        }
        Ok(h)
    }
}
