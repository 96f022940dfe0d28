//! Streaming transducer ASR with per-chunk semantic context embeddings.
//!
//! The crate is `no_std` (with `alloc`) so the numerical core can be embedded
//! anywhere; file formats, the CLI and threaded training live in the
//! `sens-asr` companion crate.
//!
//! Pipeline overview:
//!
//! 1. [`encoder`] downsamples feature frames by 4 and runs conformer blocks
//!    under a dynamic-chunk attention mask built by [`chunk_mask`].
//! 2. [`context`] pools the frame-embeddings of past chunks into one context
//!    embedding per chunk and concatenates it onto the current chunk's frames.
//! 3. [`transducer`] holds the predictor, joint network, lattice loss with
//!    FastEmit, and greedy decoding.
//! 4. [`distillation`] pulls context embeddings toward a teacher sentence
//!    embedding; [`model`] wires everything into the composite objective.
//! 5. [`streaming`] replays the masked forward pass chunk by chunk with caches.
//!
//! Everything numerical runs on the small reverse-mode engine in [`autodiff`].
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod chunk_mask;
pub mod context;
pub mod distillation;
pub mod encoder;
mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod nn;
pub mod oracle;
pub mod pair_builder;
pub mod params;
mod real;
pub mod rng;
pub mod streaming;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod transducer;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::Tensor;
