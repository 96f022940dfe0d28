//! Chunk-by-chunk inference reproducing the offline masked forward pass.
//!
//! Each complete chunk of `4·S` raw frames goes through the frontend, every
//! conformer layer (attending over cached keys/values of the last `P` chunks
//! and continuing the causal convolution from a tail cache), the context
//! module (over the ring of past chunks' frame-embeddings) and greedy
//! decoding. Because masked attention entries contribute exact zeros to the
//! offline sums, the streamed values match the offline ones bit for bit.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::autodiff::Graph;
use crate::chunk_mask::LeftContext;
use crate::context::attach_context;
use crate::encoder::DOWNSAMPLE;
use crate::model::SensModel;
use crate::params::ParamSet;
use crate::transducer::{greedy_decode, DecoderState, Emission, DEFAULT_MAX_SYMBOLS};
use crate::{Error, Real, Result, Tensor};

/// Per-stream settings, independent of how the model was trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamConfig {
    /// Chunk size `S` in encoder frames.
    pub chunk_frames: usize,
    /// Encoder attention left context `P`.
    pub left_context: LeftContext,
    /// Context-module window; the model's configured window when `None`.
    pub context_window: Option<LeftContext>,
    pub max_symbols: usize,
}

impl StreamConfig {
    pub fn new(chunk_frames: usize, left_context: LeftContext) -> Self {
        Self {
            chunk_frames,
            left_context,
            context_window: None,
            max_symbols: DEFAULT_MAX_SYMBOLS,
        }
    }
}

/// Cached keys and values of one chunk for one layer.
#[derive(Clone, Debug)]
struct KvBlock<T> {
    keys: Tensor<T>,
    values: Tensor<T>,
}

/// Everything a stream carries between pushes.
#[derive(Clone, Debug)]
pub struct StreamState<T> {
    chunk_frames: usize,
    left_context: LeftContext,
    context_window: LeftContext,
    max_symbols: usize,
    feat_dim: usize,
    kv: Vec<VecDeque<KvBlock<T>>>,
    conv_tail: Vec<Option<Tensor<T>>>,
    remainder: Vec<T>,
    ring: VecDeque<Tensor<T>>,
    decoder: DecoderState<T>,
    emissions: Vec<Emission>,
    chunks_done: usize,
    frames_done: usize,
    record: Option<Vec<Tensor<T>>>,
    closed: bool,
}

impl<T: Real> StreamState<T> {
    /// Number of completed chunks `γ`.
    pub fn chunks_done(&self) -> usize {
        self.chunks_done
    }

    pub fn frames_done(&self) -> usize {
        self.frames_done
    }

    pub fn emissions(&self) -> &[Emission] {
        &self.emissions
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Values held in all caches and buffers, for memory accounting.
    pub fn cache_values(&self) -> usize {
        let kv: usize = self
            .kv
            .iter()
            .flat_map(|layer| layer.iter())
            .map(|b| b.keys.len() + b.values.len())
            .sum();
        let conv: usize = self.conv_tail.iter().flatten().map(Tensor::len).sum();
        let ring: usize = self.ring.iter().map(Tensor::len).sum();
        let dec = self.decoder.output.len()
            + self.decoder.predictor.hidden.len()
            + self.decoder.predictor.cell.len();
        kv + conv + ring + self.remainder.len() + dec
    }

    /// Cached chunks per layer, for bound checks.
    pub fn cached_chunks(&self) -> (usize, usize) {
        (
            self.kv.iter().map(VecDeque::len).max().unwrap_or(0),
            self.ring.len(),
        )
    }
}

/// Final result of [`Stream::close`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamResult {
    /// Emissions produced by the flush itself.
    pub final_emissions: Vec<Emission>,
    /// Every emitted token of the stream, in order.
    pub tokens: Vec<usize>,
}

/// A stream bound to shared read-only model weights.
pub struct Stream<'a, T> {
    model: &'a SensModel,
    params: &'a ParamSet<T>,
    state: StreamState<T>,
}

fn keep_last<T>(q: &mut VecDeque<T>, bound: LeftContext) {
    if let LeftContext::Chunks(p) = bound {
        while q.len() > p {
            q.pop_front();
        }
    }
}

fn stack_rows<T: Real>(blocks: impl Iterator<Item = Tensor<T>>) -> Result<Option<Tensor<T>>> {
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = 0;
    for b in blocks {
        let (r, c) = b.dims2();
        rows += r;
        cols = c;
        data.extend_from_slice(b.data());
    }
    if rows == 0 {
        return Ok(None);
    }
    Ok(Some(Tensor::new(&[rows, cols], data)?))
}

impl<'a, T: Real> Stream<'a, T> {
    /// Opens an empty stream: no cached context, reset predictor, `γ = 0`.
    pub fn open(
        model: &'a SensModel,
        params: &'a ParamSet<T>,
        config: StreamConfig,
    ) -> Result<Self> {
        model.validate_params(params)?;
        if config.chunk_frames == 0 {
            return Err(Error::Parameter(
                "chunk size must be at least one frame".into(),
            ));
        }
        if config.max_symbols == 0 {
            return Err(Error::Parameter(
                "max_symbols_per_frame must be at least 1".into(),
            ));
        }
        let context_window = config.context_window.unwrap_or(model.context.config.window);
        if let LeftContext::Chunks(0) = context_window {
            return Err(Error::Parameter(
                "context window must cover at least one chunk".into(),
            ));
        }
        let layers = model.encoder.layers.len();
        let state = StreamState {
            chunk_frames: config.chunk_frames,
            left_context: config.left_context,
            context_window,
            max_symbols: config.max_symbols,
            feat_dim: model.config.encoder.feat_dim,
            kv: (0..layers).map(|_| VecDeque::new()).collect(),
            conv_tail: alloc::vec![None; layers],
            remainder: Vec::new(),
            ring: VecDeque::new(),
            decoder: DecoderState::new(&model.predictor, params)?,
            emissions: Vec::new(),
            chunks_done: 0,
            frames_done: 0,
            record: None,
            closed: false,
        };
        Ok(Self {
            model,
            params,
            state,
        })
    }

    /// Keeps a copy of every chunk's frame-embeddings (unbounded; for tests).
    pub fn record_frames(&mut self) {
        self.state.record.get_or_insert_with(Vec::new);
    }

    /// Recorded frame-embeddings `[frames_done × d]`, if recording.
    pub fn recorded_frames(&self) -> Result<Option<Tensor<T>>> {
        match &self.state.record {
            Some(blocks) => stack_rows(blocks.iter().cloned()),
            None => Ok(None),
        }
    }

    pub fn state(&self) -> &StreamState<T> {
        &self.state
    }

    /// Buffers `raw[n×feat]` and processes every complete chunk.
    pub fn push_chunk(&mut self, raw: &Tensor<T>) -> Result<Vec<Emission>> {
        if self.state.closed {
            return Err(Error::State("push on a closed stream".into()));
        }
        let s = raw.shape();
        if s.len() != 2 || s[1] != self.state.feat_dim {
            return Err(Error::shape("push_chunk", s, &[self.state.feat_dim]));
        }
        self.state.remainder.extend_from_slice(raw.data());
        let chunk_values = DOWNSAMPLE * self.state.chunk_frames * self.state.feat_dim;
        let mut out = Vec::new();
        while self.state.remainder.len() >= chunk_values {
            let rest = self.state.remainder.split_off(chunk_values);
            let block = core::mem::replace(&mut self.state.remainder, rest);
            out.extend(self.process(block)?);
        }
        Ok(out)
    }

    /// Flushes the remainder as a final (possibly short) chunk.
    pub fn close(&mut self) -> Result<StreamResult> {
        if self.state.closed {
            return Err(Error::State("stream already closed".into()));
        }
        self.state.closed = true;
        let block = core::mem::take(&mut self.state.remainder);
        let final_emissions = if block.is_empty() {
            Vec::new()
        } else {
            self.process(block)?
        };
        Ok(StreamResult {
            final_emissions,
            tokens: self.state.emissions.iter().map(|e| e.token).collect(),
        })
    }

    fn process(&mut self, block: Vec<T>) -> Result<Vec<Emission>> {
        let model = self.model;
        let st = &mut self.state;
        let raw_rows = block.len() / st.feat_dim;
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let x = g.constant(Tensor::new(&[raw_rows, st.feat_dim], block)?);
        let h = model.encoder.frontend(&mut g, &p, x)?;
        let mut h = model.encoder.add_positions(&mut g, &p, h, st.frames_done)?;
        let rows = g.shape(h)[0];
        let tail_rows = model.config.encoder.conv_kernel - 1;

        for (i, layer) in model.encoder.layers.iter().enumerate() {
            let keys = stack_rows(st.kv[i].iter().map(|b| b.keys.clone()))?;
            let values = stack_rows(st.kv[i].iter().map(|b| b.values.clone()))?;
            let past_rows = keys.as_ref().map_or(0, |k| k.dims2().0);
            let past = match (keys, values) {
                (Some(k), Some(v)) => Some((g.constant(k), g.constant(v))),
                _ => None,
            };
            let history = st.conv_tail[i].clone().map(|t| g.constant(t));
            let mask = alloc::vec![true; past_rows + rows];
            let step = layer.step(&mut g, &p, h, past, &mask, history)?;

            st.kv[i].push_back(KvBlock {
                keys: g.value(step.keys).clone(),
                values: g.value(step.values).clone(),
            });
            keep_last(&mut st.kv[i], st.left_context);

            if tail_rows > 0 {
                let prev = st.conv_tail[i].take();
                let all = stack_rows(
                    prev.into_iter()
                        .chain(core::iter::once(g.value(step.conv_input).clone())),
                )?
                .ok_or_else(|| Error::State("empty convolution input".into()))?;
                let (n, c) = all.dims2();
                let keep = tail_rows.min(n);
                st.conv_tail[i] = Some(Tensor::new(
                    &[keep, c],
                    all.data()[(n - keep) * c..].to_vec(),
                )?);
            }
            h = step.output;
        }

        let past = stack_rows(st.ring.iter().cloned())?.map(|t| g.constant(t));
        let context = model.context.compute(&mut g, &p, past)?;
        let enriched = attach_context(&mut g, h, context)?;
        let frames = g.value(h).clone();
        if let Some(rec) = st.record.as_mut() {
            rec.push(frames.clone());
        }
        st.ring.push_back(frames);
        keep_last(&mut st.ring, st.context_window);

        let emitted = greedy_decode(
            &model.predictor,
            &model.joint,
            self.params,
            g.value(enriched),
            &mut st.decoder,
            st.frames_done,
            st.max_symbols,
        )?;
        st.emissions.extend_from_slice(&emitted);
        st.frames_done += rows;
        st.chunks_done += 1;
        Ok(emitted)
    }
}
