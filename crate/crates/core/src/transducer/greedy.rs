use alloc::vec::Vec;

use super::joint::Joint;
use super::predictor::{Predictor, PredictorState};
use super::vocab::BLANK;
use crate::autodiff::Graph;
use crate::params::ParamSet;
use crate::{Error, Real, Result, Tensor};

/// Emission cap per frame; guards against non-termination.
pub const DEFAULT_MAX_SYMBOLS: usize = 5;

/// A non-blank token and the encoder frame at which it was emitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Emission {
    pub token: usize,
    pub frame: usize,
}

/// Per-frame scoring interface driven by [`greedy_search`].
pub trait StepScorer {
    /// Logits over the vocabulary at local frame `t` given the current label history.
    fn logits(&mut self, t: usize) -> Result<Vec<f64>>;
    /// Advances the label history by `token`.
    fn emit(&mut self, token: usize) -> Result<()>;
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Greedy transducer search over `frames` local frames. Frame indices in the
/// returned emissions are offset by `frame_offset`.
pub fn greedy_search<S: StepScorer>(
    scorer: &mut S,
    frames: usize,
    frame_offset: usize,
    max_symbols: usize,
) -> Result<Vec<Emission>> {
    if max_symbols == 0 {
        return Err(Error::Parameter(
            "max_symbols_per_frame must be at least 1".into(),
        ));
    }
    let mut out = Vec::new();
    for t in 0..frames {
        for _ in 0..max_symbols {
            let k = argmax(&scorer.logits(t)?);
            if k == BLANK {
                break;
            }
            scorer.emit(k)?;
            out.push(Emission {
                token: k,
                frame: frame_offset + t,
            });
        }
    }
    Ok(out)
}

/// Label-history state of the greedy decoder: the predictor state plus its
/// latest output.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState<T> {
    pub predictor: PredictorState<T>,
    pub output: Tensor<T>,
}

impl<T: Real> DecoderState<T> {
    /// State after consuming the start-of-sequence (blank) input.
    pub fn new(predictor: &Predictor, params: &ParamSet<T>) -> Result<Self> {
        let mut g = Graph::new();
        let p = params.bind_frozen(&mut g);
        let reset = PredictorState::reset(predictor.hidden);
        let (out, next) = predictor.step(&mut g, &p, BLANK, &reset)?;
        Ok(Self {
            predictor: next,
            output: g.value(out).clone(),
        })
    }
}

struct ModelScorer<'a, T: Real> {
    predictor: &'a Predictor,
    joint: &'a Joint,
    params: &'a ParamSet<T>,
    enc: &'a Tensor<T>,
    state: &'a mut DecoderState<T>,
}

impl<T: Real> StepScorer for ModelScorer<'_, T> {
    fn logits(&mut self, t: usize) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let row = self.enc.row(t);
        let enc = g.constant(Tensor::new(&[1, row.len()], row.to_vec())?);
        let pred = g.constant(self.state.output.clone());
        let logits = self.joint.logits(&mut g, &p, enc, pred)?;
        Ok(g.value(logits).data().iter().map(|v| v.as_f64()).collect())
    }

    fn emit(&mut self, token: usize) -> Result<()> {
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let (out, next) = self
            .predictor
            .step(&mut g, &p, token, &self.state.predictor)?;
        self.state.output = g.value(out).clone();
        self.state.predictor = next;
        Ok(())
    }
}

/// Greedy decoding of context-enriched frame-embeddings `enc[T×(d+c)]`,
/// continuing from `state`.
pub fn greedy_decode<T: Real>(
    predictor: &Predictor,
    joint: &Joint,
    params: &ParamSet<T>,
    enc: &Tensor<T>,
    state: &mut DecoderState<T>,
    frame_offset: usize,
    max_symbols: usize,
) -> Result<Vec<Emission>> {
    let (frames, _) = enc.dims2();
    let mut scorer = ModelScorer {
        predictor,
        joint,
        params,
        enc,
        state,
    };
    greedy_search(&mut scorer, frames, frame_offset, max_symbols)
}
