//! Dynamic chunk attention masks.
//!
//! Frame `t` belongs to chunk `⌊t/S⌋`. Frame `t` may attend to frame `u` iff
//! `⌊t/S⌋ − P ≤ ⌊u/S⌋ ≤ ⌊t/S⌋`, i.e. its own chunk plus `P` chunks of left
//! context. `S = T` gives full attention.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::rng::Rng;
use crate::{Error, Result};

/// Number of past chunks visible to a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LeftContext {
    Chunks(usize),
    Unlimited,
}

impl LeftContext {
    /// First visible chunk for a frame in chunk `chunk`.
    pub fn first_chunk(self, chunk: usize) -> usize {
        match self {
            LeftContext::Chunks(p) => chunk.saturating_sub(p),
            LeftContext::Unlimited => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ChunkSpec {
    chunk_size: usize,
    left_context: LeftContext,
    total_frames: usize,
}

impl ChunkSpec {
    pub fn new(chunk_size: usize, left_context: LeftContext, total_frames: usize) -> Result<Self> {
        if total_frames == 0 {
            return Err(Error::Parameter(
                "total frame count must be positive".into(),
            ));
        }
        if chunk_size == 0 || chunk_size > total_frames {
            return Err(Error::Parameter(alloc::format!(
                "chunk size {chunk_size} outside [1, {total_frames}]"
            )));
        }
        Ok(Self {
            chunk_size,
            left_context,
            total_frames,
        })
    }

    /// Single chunk covering the whole sequence.
    pub fn full_context(total_frames: usize) -> Result<Self> {
        Self::new(total_frames, LeftContext::Chunks(0), total_frames)
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn left_context(&self) -> LeftContext {
        self.left_context
    }

    pub fn total_frames(&self) -> usize {
        self.total_frames
    }

    pub fn chunk_of(&self, t: usize) -> usize {
        t / self.chunk_size
    }

    pub fn num_chunks(&self) -> usize {
        self.total_frames.div_ceil(self.chunk_size)
    }

    /// Frame range `[start, end)` of chunk `c` (the last chunk may be short).
    pub fn chunk_frames(&self, c: usize) -> core::ops::Range<usize> {
        let start = c * self.chunk_size;
        start..(start + self.chunk_size).min(self.total_frames)
    }

    pub fn allows(&self, t: usize, u: usize) -> bool {
        let (ct, cu) = (self.chunk_of(t), self.chunk_of(u));
        cu <= ct && cu >= self.left_context.first_chunk(ct)
    }
}

/// Dense `T×T` boolean mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskMatrix {
    size: usize,
    bits: Vec<bool>,
}

impl MaskMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, t: usize, u: usize) -> bool {
        self.bits[t * self.size + u]
    }

    pub fn row(&self, t: usize) -> &[bool] {
        &self.bits[t * self.size..(t + 1) * self.size]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn all_ones(size: usize) -> Self {
        Self {
            size,
            bits: vec![true; size * size],
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.size)
            .map(|t| self.row(t).iter().map(|&b| u8::from(b)).collect())
            .collect()
    }
}

pub fn build_mask(spec: &ChunkSpec) -> MaskMatrix {
    let n = spec.total_frames;
    let mut bits = vec![false; n * n];
    for t in 0..n {
        let ct = spec.chunk_of(t);
        let lo = spec.left_context.first_chunk(ct) * spec.chunk_size;
        let hi = spec.chunk_frames(ct).end;
        bits[t * n + lo..t * n + hi].fill(true);
    }
    MaskMatrix { size: n, bits }
}

/// Training-time chunk sampling policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DctPolicy {
    /// Probability that a batch is chunked rather than full-context.
    pub chunked_batch_fraction: f64,
    pub chunk_ms_min: f64,
    pub chunk_ms_max: f64,
    /// Duration of one encoder frame.
    pub frame_ms: f64,
}

impl Default for DctPolicy {
    fn default() -> Self {
        Self {
            chunked_batch_fraction: 0.6,
            chunk_ms_min: 160.0,
            chunk_ms_max: 1280.0,
            frame_ms: 40.0,
        }
    }
}

impl DctPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.chunked_batch_fraction) {
            return Err(Error::Parameter(
                "chunked batch fraction must lie in [0, 1]".into(),
            ));
        }
        if self.chunk_ms_min > self.chunk_ms_max {
            return Err(Error::Parameter("chunk_ms_min exceeds chunk_ms_max".into()));
        }
        ms_to_frames(self.chunk_ms_min, self.frame_ms)?;
        Ok(())
    }

    /// Encoder-frame range `[lo, hi]` of the chunk-size interval.
    pub fn frame_range(&self) -> Result<(usize, usize)> {
        Ok((
            ms_to_frames(self.chunk_ms_min, self.frame_ms)?,
            ms_to_frames(self.chunk_ms_max, self.frame_ms)?,
        ))
    }
}

/// `round(ms / frame_ms)`, at least 1.
pub fn ms_to_frames(ms: f64, frame_ms: f64) -> Result<usize> {
    if frame_ms.is_nan() || frame_ms <= 0.0 {
        return Err(Error::Parameter(alloc::format!(
            "frame duration must be positive, got {frame_ms}"
        )));
    }
    if ms.is_nan() || ms <= 0.0 {
        return Err(Error::Parameter(alloc::format!(
            "duration must be positive, got {ms}"
        )));
    }
    Ok((num_traits::Float::round(ms / frame_ms) as usize).max(1))
}

/// Draws the chunk configuration for one batch whose sequences have `t` frames.
pub fn sample_dct_config(policy: &DctPolicy, t: usize, rng: &mut Rng) -> Result<ChunkSpec> {
    policy.validate()?;
    if t == 0 {
        return Err(Error::Parameter(
            "total frame count must be positive".into(),
        ));
    }
    if !rng.gen_bool(policy.chunked_batch_fraction) {
        return ChunkSpec::full_context(t);
    }
    let (lo, hi) = policy.frame_range()?;
    let (lo, hi) = (lo.clamp(1, t), hi.clamp(1, t));
    let size = rng.gen_range(lo..=hi);
    let left = if rng.gen_bool(0.5) {
        LeftContext::Chunks(0)
    } else {
        LeftContext::Unlimited
    };
    ChunkSpec::new(size, left, t)
}
