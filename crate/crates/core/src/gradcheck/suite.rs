//! Randomized gradient checks of every differentiable operation, a few
//! composite blocks, and the full training objective on a toy model.
//!
//! Each instance draws fresh shapes and values, then reduces the operation's
//! output to a scalar with a random constant weighting so that no output
//! element is ignored.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use super::check;
use crate::autodiff::{Graph, Var};
use crate::chunk_mask::{ChunkSpec, LeftContext};
use crate::context::ContextConfig;
use crate::distillation::LossWeights;
use crate::encoder::{frames_after_frontend, EncoderConfig};
use crate::model::{ModelConfig, SensModel};
use crate::nn::{ConvModule, Lstm, MultiHeadAttention};
use crate::params::{Bound, Init, ParamSet};
use crate::rng::{derived, fnv1a64, seeded, Rng};
use crate::transducer::lattice_loss_var;
use crate::{Real, Result, Tensor};

type LossFn<T> = Box<dyn Fn(&mut Graph<T>, &Bound) -> Result<Var>>;

/// A differentiable operation or block covered by the suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operation {
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Scale,
    AddRow,
    OuterAdd,
    Sigmoid,
    Tanh,
    Relu,
    Swish,
    Glu,
    LayerNorm,
    CausalDepthwiseConv,
    Embedding,
    LogSoftmax,
    Softmax,
    MaskedSoftmax,
    ConcatCols,
    ConcatRows,
    SliceCols,
    SliceRows,
    BroadcastRows,
    PadRows,
    Reshape,
    Sum,
    Mean,
    Mse,
    Linear,
    TransducerLoss,
    Attention,
    ConvBlock,
    LstmStep,
}

impl Operation {
    pub const ALL: [Operation; 34] = [
        Self::MatMul,
        Self::Transpose,
        Self::Add,
        Self::Sub,
        Self::Mul,
        Self::Scale,
        Self::AddRow,
        Self::OuterAdd,
        Self::Sigmoid,
        Self::Tanh,
        Self::Relu,
        Self::Swish,
        Self::Glu,
        Self::LayerNorm,
        Self::CausalDepthwiseConv,
        Self::Embedding,
        Self::LogSoftmax,
        Self::Softmax,
        Self::MaskedSoftmax,
        Self::ConcatCols,
        Self::ConcatRows,
        Self::SliceCols,
        Self::SliceRows,
        Self::BroadcastRows,
        Self::PadRows,
        Self::Reshape,
        Self::Sum,
        Self::Mean,
        Self::Mse,
        Self::Linear,
        Self::TransducerLoss,
        Self::Attention,
        Self::ConvBlock,
        Self::LstmStep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::MatMul => "matmul",
            Self::Transpose => "transpose",
            Self::Add => "add",
            Self::Sub => "sub",
            Self::Mul => "mul",
            Self::Scale => "scale",
            Self::AddRow => "add_row",
            Self::OuterAdd => "outer_add",
            Self::Sigmoid => "sigmoid",
            Self::Tanh => "tanh",
            Self::Relu => "relu",
            Self::Swish => "swish",
            Self::Glu => "glu",
            Self::LayerNorm => "layer_norm",
            Self::CausalDepthwiseConv => "causal_depthwise_conv",
            Self::Embedding => "embedding",
            Self::LogSoftmax => "log_softmax",
            Self::Softmax => "softmax",
            Self::MaskedSoftmax => "masked_softmax",
            Self::ConcatCols => "concat_cols",
            Self::ConcatRows => "concat_rows",
            Self::SliceCols => "slice_cols",
            Self::SliceRows => "slice_rows",
            Self::BroadcastRows => "broadcast_rows",
            Self::PadRows => "pad_rows",
            Self::Reshape => "reshape",
            Self::Sum => "sum",
            Self::Mean => "mean",
            Self::Mse => "mse",
            Self::Linear => "linear",
            Self::TransducerLoss => "transducer_loss",
            Self::Attention => "masked_attention",
            Self::ConvBlock => "conv_block",
            Self::LstmStep => "lstm_step",
        }
    }
}

/// Name of the full-model entry of [`run_suite`].
pub const COMPOSITE: &str = "composite_loss";

/// Worst result over all instances of one check.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub instances: usize,
    /// Gradient elements compared, over all instances.
    pub checked: usize,
    pub max_rel_err: f64,
    /// Instance, parameter name and flat index of the worst element.
    pub worst: Option<(usize, String, usize)>,
}

impl SuiteEntry {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }

    fn new(name: &'static str) -> Self {
        Self {
            name,
            instances: 0,
            checked: 0,
            max_rel_err: 0.0,
            worst: None,
        }
    }

    fn record(&mut self, report: super::GradCheckReport) {
        let instance = self.instances;
        self.instances += 1;
        self.checked += report.checked;
        if self.worst.is_none() || report.max_rel_err > self.max_rel_err {
            self.max_rel_err = report.max_rel_err;
            self.worst = report.worst.map(|(n, j)| (instance, n, j));
        }
    }
}

struct Case<T> {
    params: ParamSet<T>,
    loss: LossFn<T>,
}

fn values<T: Real>(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<T> {
    (0..n).map(|_| T::of(rng.gen_range(lo..hi))).collect()
}

fn tensor<T: Real>(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::new(shape, values(rng, n, lo, hi)).expect("consistent shape")
}

/// Values with `|x| ≥ 0.1`, clear of the kink at zero.
fn off_zero<T: Real>(rng: &mut Rng, shape: &[usize]) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..2.0);
            T::of(if rng.gen_bool(0.5) { m } else { -m })
        })
        .collect();
    Tensor::new(shape, data).expect("consistent shape")
}

fn dim(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    rng.gen_range(lo..=hi)
}

/// Wraps `body` in a random constant weighting of its output.
fn projected<T, F>(rng: &mut Rng, params: ParamSet<T>, body: F) -> Result<Case<T>>
where
    T: Real,
    F: Fn(&mut Graph<T>, &Bound) -> Result<Var> + 'static,
{
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let out = body(&mut g, &bound)?;
    let weights: Tensor<T> = tensor(rng, g.shape(out), -1.0, 1.0);
    let loss = move |g: &mut Graph<T>, p: &Bound| {
        let out = body(g, p)?;
        let w = g.constant(weights.clone());
        let weighted = g.mul(out, w)?;
        Ok(g.sum(weighted))
    };
    Ok(Case {
        params,
        loss: Box::new(loss),
    })
}

fn unary<T: Real>(
    x: Tensor<T>,
    rng: &mut Rng,
    f: impl Fn(&mut Graph<T>, Var) -> Result<Var> + 'static,
) -> Result<Case<T>> {
    let mut params = ParamSet::new();
    let xi = params.add("x", x)?;
    projected(rng, params, move |g, p| f(g, p[xi]))
}

fn binary<T: Real>(
    a: Tensor<T>,
    b: Tensor<T>,
    rng: &mut Rng,
    f: impl Fn(&mut Graph<T>, Var, Var) -> Result<Var> + 'static,
) -> Result<Case<T>> {
    let mut params = ParamSet::new();
    let ai = params.add("a", a)?;
    let bi = params.add("b", b)?;
    projected(rng, params, move |g, p| f(g, p[ai], p[bi]))
}

/// Builds a module against a scratch parameter set, then redraws every
/// parameter uniformly in `[−1, 1)` so that no block starts near-degenerate.
fn module_params<T: Real, M>(
    rng: &mut Rng,
    build: impl FnOnce(&mut Init<'_>) -> Result<M>,
) -> Result<(M, ParamSet<T>)> {
    let mut set = ParamSet::<f32>::new();
    let mut init_rng = seeded(rng.gen());
    let module = build(&mut Init::new(&mut set, &mut init_rng))?;
    let mut params: ParamSet<T> = set.cast();
    for id in params.ids().collect::<Vec<_>>() {
        let shape = params.get(id).shape().to_vec();
        *params.get_mut(id) = tensor(rng, &shape, -1.0, 1.0);
    }
    Ok((module, params))
}

fn random_mask(rng: &mut Rng, rows: usize, cols: usize) -> Vec<bool> {
    let mut mask = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let keep = rng.gen_range(0..cols);
        mask.extend((0..cols).map(|j| j == keep || rng.gen_bool(0.6)));
    }
    mask
}

fn build_case<T: Real>(op: Operation, rng: &mut Rng) -> Result<Case<T>> {
    let (m, n) = (dim(rng, 1, 4), dim(rng, 1, 4));
    match op {
        Operation::MatMul => {
            let k = dim(rng, 1, 4);
            let (a, b) = (
                tensor(rng, &[m, k], -1.0, 1.0),
                tensor(rng, &[k, n], -1.0, 1.0),
            );
            binary(a, b, rng, |g, a, b| g.matmul(a, b))
        }
        Operation::Transpose => unary(tensor(rng, &[m, n], -1.0, 1.0), rng, |g, x| g.transpose(x)),
        Operation::Add | Operation::Sub | Operation::Mul => {
            let (a, b) = (
                tensor(rng, &[m, n], -1.0, 1.0),
                tensor(rng, &[m, n], -1.0, 1.0),
            );
            binary(a, b, rng, move |g, a, b| match op {
                Operation::Add => g.add(a, b),
                Operation::Sub => g.sub(a, b),
                _ => g.mul(a, b),
            })
        }
        Operation::Scale => {
            let c = T::of(rng.gen_range(-2.0..2.0));
            unary(tensor(rng, &[m, n], -1.0, 1.0), rng, move |g, x| {
                Ok(g.scale(x, c))
            })
        }
        Operation::AddRow => {
            let (x, b) = (
                tensor(rng, &[m, n], -1.0, 1.0),
                tensor(rng, &[n], -1.0, 1.0),
            );
            binary(x, b, rng, |g, x, b| g.add_row(x, b))
        }
        Operation::OuterAdd => {
            let u = dim(rng, 1, 4);
            let (a, b) = (
                tensor(rng, &[m, n], -1.0, 1.0),
                tensor(rng, &[u, n], -1.0, 1.0),
            );
            binary(a, b, rng, |g, a, b| g.outer_add(a, b))
        }
        Operation::Sigmoid => unary(
            tensor(rng, &[m, n], -3.0, 3.0),
            rng,
            |g, x| Ok(g.sigmoid(x)),
        ),
        Operation::Tanh => unary(tensor(rng, &[m, n], -3.0, 3.0), rng, |g, x| Ok(g.tanh(x))),
        Operation::Relu => unary(off_zero(rng, &[m, n]), rng, |g, x| Ok(g.relu(x))),
        Operation::Swish => unary(tensor(rng, &[m, n], -3.0, 3.0), rng, |g, x| Ok(g.swish(x))),
        Operation::Glu => unary(tensor(rng, &[m, 2 * n], -2.0, 2.0), rng, |g, x| g.glu(x)),
        Operation::LayerNorm => {
            let n = dim(rng, 2, 5);
            let mut params = ParamSet::new();
            let x = params.add("x", tensor(rng, &[m, n], -2.0, 2.0))?;
            let gamma = params.add("gamma", tensor(rng, &[n], 0.5, 1.5))?;
            let beta = params.add("beta", tensor(rng, &[n], -0.5, 0.5))?;
            projected(rng, params, move |g, p| {
                g.layer_norm(p[x], p[gamma], p[beta], T::of(1e-5))
            })
        }
        Operation::CausalDepthwiseConv => {
            let k = dim(rng, 1, 4);
            let mut params = ParamSet::new();
            let x = params.add("x", tensor(rng, &[m, n], -1.0, 1.0))?;
            let w = params.add("w", tensor(rng, &[k, n], -1.0, 1.0))?;
            let b = params.add("b", tensor(rng, &[n], -1.0, 1.0))?;
            projected(rng, params, move |g, p| {
                g.causal_depthwise_conv(p[x], p[w], p[b])
            })
        }
        Operation::Embedding => {
            let len = dim(rng, 1, 5);
            let ids: Vec<usize> = (0..len).map(|_| rng.gen_range(0..m)).collect();
            unary(tensor(rng, &[m, n], -1.0, 1.0), rng, move |g, t| {
                g.embedding(t, &ids)
            })
        }
        Operation::LogSoftmax => unary(tensor(rng, &[m, n], -2.0, 2.0), rng, |g, x| {
            g.log_softmax(x)
        }),
        Operation::Softmax => unary(tensor(rng, &[m, n], -2.0, 2.0), rng, |g, x| g.softmax(x)),
        Operation::MaskedSoftmax => {
            let mask = if rng.gen_bool(0.3) {
                random_mask(rng, 1, n)
            } else {
                random_mask(rng, m, n)
            };
            unary(tensor(rng, &[m, n], -2.0, 2.0), rng, move |g, x| {
                g.masked_softmax(x, &mask)
            })
        }
        Operation::ConcatCols | Operation::ConcatRows => {
            let parts = dim(rng, 2, 3);
            let mut params = ParamSet::new();
            let mut ids = Vec::with_capacity(parts);
            for i in 0..parts {
                let d = dim(rng, 1, 3);
                let shape = if op == Operation::ConcatCols {
                    [m, d]
                } else {
                    [d, n]
                };
                ids.push(params.add(&alloc::format!("part{i}"), tensor(rng, &shape, -1.0, 1.0))?);
            }
            projected(rng, params, move |g, p| {
                let vars: Vec<Var> = ids.iter().map(|&i| p[i]).collect();
                if op == Operation::ConcatCols {
                    g.concat_cols(&vars)
                } else {
                    g.concat_rows(&vars)
                }
            })
        }
        Operation::SliceCols => {
            let start = rng.gen_range(0..n);
            let len = rng.gen_range(1..=n - start);
            unary(tensor(rng, &[m, n], -1.0, 1.0), rng, move |g, x| {
                g.slice_cols(x, start, len)
            })
        }
        Operation::SliceRows => {
            let start = rng.gen_range(0..m);
            let len = rng.gen_range(1..=m - start);
            unary(tensor(rng, &[m, n], -1.0, 1.0), rng, move |g, x| {
                g.slice_rows(x, start, len)
            })
        }
        Operation::BroadcastRows => {
            let rows = dim(rng, 1, 4);
            unary(tensor(rng, &[1, n], -1.0, 1.0), rng, move |g, x| {
                g.broadcast_rows(x, rows)
            })
        }
        Operation::PadRows => {
            let extra = dim(rng, 1, 3);
            unary(tensor(rng, &[m, n], -1.0, 1.0), rng, move |g, x| {
                g.pad_rows(x, extra)
            })
        }
        Operation::Reshape => unary(tensor(rng, &[m, n], -1.0, 1.0), rng, move |g, x| {
            g.reshape(x, &[n, m])
        }),
        Operation::Sum => unary(tensor(rng, &[m, n], -1.0, 1.0), rng, |g, x| Ok(g.sum(x))),
        Operation::Mean => unary(tensor(rng, &[m, n], -1.0, 1.0), rng, |g, x| Ok(g.mean(x))),
        Operation::Mse => {
            let (a, b) = (
                tensor(rng, &[m, n], -1.0, 1.0),
                tensor(rng, &[m, n], -1.0, 1.0),
            );
            binary(a, b, rng, |g, a, b| g.mse(a, b))
        }
        Operation::Linear => {
            let k = dim(rng, 1, 4);
            let mut params = ParamSet::new();
            let x = params.add("x", tensor(rng, &[m, k], -1.0, 1.0))?;
            let w = params.add("w", tensor(rng, &[k, n], -1.0, 1.0))?;
            let b = params.add("b", tensor(rng, &[n], -1.0, 1.0))?;
            projected(rng, params, move |g, p| g.linear(p[x], p[w], Some(p[b])))
        }
        Operation::TransducerLoss => {
            let frames = dim(rng, 1, 4);
            let vocab = dim(rng, 2, 5);
            let u = rng.gen_range(0..=3);
            let targets: Vec<usize> = (0..u).map(|_| rng.gen_range(1..vocab)).collect();
            let lambda = if rng.gen_bool(0.5) {
                0.006
            } else {
                rng.gen_range(0.0..0.1)
            };
            let mut params = ParamSet::new();
            let logits =
                params.add("logits", tensor(rng, &[frames * (u + 1), vocab], -2.0, 2.0))?;
            Ok(Case {
                params,
                loss: Box::new(move |g, p| {
                    let lp = g.log_softmax(p[logits])?;
                    Ok(lattice_loss_var(g, lp, frames, &targets, lambda)?.0)
                }),
            })
        }
        Operation::Attention => {
            let heads = dim(rng, 1, 2);
            let d = heads * dim(rng, 1, 3);
            let keys = dim(rng, 1, 5);
            let (attn, mut params) =
                module_params::<T, _>(rng, |init| MultiHeadAttention::new(init, "attn", d, heads))?;
            let x = params.add("x", tensor(rng, &[m, d], -1.0, 1.0))?;
            let mem = params.add("memory", tensor(rng, &[keys, d], -1.0, 1.0))?;
            let mask = random_mask(rng, m, keys);
            projected(rng, params, move |g, p| {
                let (k, v) = attn.project_kv(g, p, p[mem])?;
                attn.attend(g, p, p[x], k, v, &mask)
            })
        }
        Operation::ConvBlock => {
            let d = dim(rng, 2, 4);
            let kernel = 2 * dim(rng, 0, 2) + 1;
            let (block, mut params) =
                module_params::<T, _>(rng, |init| ConvModule::new(init, "conv", d, kernel))?;
            let x = params.add("x", tensor(rng, &[m, d], -1.0, 1.0))?;
            let hist = (rng.gen_bool(0.5) && kernel > 1)
                .then(|| tensor(rng, &[kernel - 1, d], -1.0, 1.0))
                .map(|t| params.add("history", t))
                .transpose()?;
            projected(rng, params, move |g, p| {
                Ok(block.forward(g, p, p[x], hist.map(|h| p[h]))?.0)
            })
        }
        Operation::LstmStep => {
            let (input, hidden) = (dim(rng, 1, 4), dim(rng, 1, 4));
            let (cell, mut params) =
                module_params::<T, _>(rng, |init| Lstm::new(init, "lstm", input, hidden))?;
            let x = params.add("x", tensor(rng, &[1, input], -1.0, 1.0))?;
            let h = params.add("h", tensor(rng, &[1, hidden], -1.0, 1.0))?;
            let c = params.add("c", tensor(rng, &[1, hidden], -1.0, 1.0))?;
            projected(rng, params, move |g, p| {
                let (h, c) = cell.step(g, p, p[x], p[h], p[c])?;
                g.concat_cols(&[h, c])
            })
        }
    }
}

/// Rejection thresholds that keep central differences meaningful.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conditioning {
    /// Minimum `|x|` at every ReLU input.
    pub relu_margin: f64,
    /// Minimum row standard deviation at every layer-norm input.
    pub norm_spread: f64,
}

impl Conditioning {
    /// Bounds for single operations and blocks.
    pub const OPERATION: Self = Self {
        relu_margin: 10.0 * super::STEP,
        norm_spread: 0.5,
    };
    /// Bounds for the full model at initialization scale.
    pub const MODEL: Self = Self {
        relu_margin: 10.0 * super::STEP,
        norm_spread: 0.15,
    };

    fn accepts<T: Real>(
        &self,
        params: &ParamSet<T>,
        loss: &dyn Fn(&mut Graph<T>, &Bound) -> Result<Var>,
    ) -> Result<bool> {
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        loss(&mut g, &bound)?;
        let margin = g.relu_margin().map_or(f64::INFINITY, Real::as_f64);
        let spread = g.norm_spread().map_or(f64::INFINITY, Real::as_f64);
        Ok(margin >= self.relu_margin && spread >= self.norm_spread)
    }
}

/// Redraws per instance before giving up.
const MAX_ATTEMPTS: usize = 10_000;

fn exhausted(name: &str) -> crate::Error {
    crate::Error::Parameter(alloc::format!(
        "no well-conditioned {name} instance in {MAX_ATTEMPTS} draws"
    ))
}

fn instance_rng(seed: u64, name: &str, instance: usize) -> Rng {
    derived(seed ^ fnv1a64(name.as_bytes()), instance as u64)
}

/// Checks `op` on `instances` random instances.
pub fn check_operation<T: Real>(op: Operation, instances: usize, seed: u64) -> Result<SuiteEntry> {
    let mut entry = SuiteEntry::new(op.name());
    for i in 0..instances {
        let mut rng = instance_rng(seed, op.name(), i);
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let case = build_case::<T>(op, &mut rng)?;
            if Conditioning::OPERATION.accepts(&case.params, &case.loss)? {
                accepted = Some(case);
                break;
            }
        }
        let case = accepted.ok_or_else(|| exhausted(op.name()))?;
        entry.record(check(&case.params, super::STEP, |g, p| (case.loss)(g, p))?);
    }
    Ok(entry)
}

/// Smallest model shape that still exercises every block.
pub fn toy_config(rng: &mut Rng) -> ModelConfig {
    let heads = dim(rng, 1, 2);
    ModelConfig {
        encoder: EncoderConfig {
            feat_dim: dim(rng, 2, 3),
            num_layers: 1,
            d_model: 8,
            num_heads: heads,
            ffn_dim: 4,
            conv_kernel: 2 * dim(rng, 0, 1) + 1,
            max_positions: 8,
        },
        context: ContextConfig {
            num_decoder_layers: 1,
            teacher_dim: 3,
            window: if rng.gen_bool(0.5) {
                LeftContext::Unlimited
            } else {
                LeftContext::Chunks(1)
            },
            num_heads: heads,
            ffn_dim: 4,
        },
        pred_dim: 3,
        joint_dim: 4,
        vocab_size: dim(rng, 2, 4),
    }
}

/// Checks the full objective (transducer loss with FastEmit plus weighted
/// distillation MSE) of a random toy model against every parameter.
pub fn check_composite<T: Real>(
    instances: usize,
    seed: u64,
    weights: &LossWeights,
) -> Result<SuiteEntry> {
    let mut entry = SuiteEntry::new(COMPOSITE);
    for i in 0..instances {
        let mut rng = instance_rng(seed, entry.name, i);
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let case = composite_case::<T>(&mut rng, *weights)?;
            if Conditioning::MODEL.accepts(&case.params, &case.loss)? {
                accepted = Some(case);
                break;
            }
        }
        let case = accepted.ok_or_else(|| exhausted(entry.name))?;
        entry.record(check(&case.params, super::STEP, |g, p| (case.loss)(g, p))?);
    }
    Ok(entry)
}

fn composite_case<T: Real>(rng: &mut Rng, weights: LossWeights) -> Result<Case<T>> {
    let config = toy_config(rng);
    let (model, params) = SensModel::new(&config, rng.gen())?;
    let raw = dim(rng, 5, 16);
    let frames = frames_after_frontend(raw);
    let features: Tensor<T> = tensor(rng, &[raw, config.encoder.feat_dim], -1.0, 1.0);
    let u = dim(rng, 1, 3);
    let targets: Vec<usize> = (0..u)
        .map(|_| rng.gen_range(1..config.vocab_size))
        .collect();
    let teacher: Tensor<T> = tensor(rng, &[config.context.teacher_dim], -1.0, 1.0);
    let chunk = dim(rng, 1, frames);
    let left = if rng.gen_bool(0.5) {
        LeftContext::Unlimited
    } else {
        LeftContext::Chunks(rng.gen_range(0..=2))
    };
    let spec = ChunkSpec::new(chunk, left, frames)?;
    Ok(Case {
        params: params.cast(),
        loss: Box::new(move |g, p| {
            Ok(model
                .forward_loss(g, p, &features, &targets, Some(&teacher), &spec, &weights)?
                .total)
        }),
    })
}

/// Every operation followed by the composite objective.
pub fn run_suite<T: Real>(
    instances: usize,
    seed: u64,
    weights: &LossWeights,
) -> Result<Vec<SuiteEntry>> {
    let mut out = Vec::with_capacity(Operation::ALL.len() + 1);
    for op in Operation::ALL {
        out.push(check_operation::<T>(op, instances, seed)?);
    }
    out.push(check_composite::<T>(instances, seed, weights)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{TOL_F32, TOL_F64};

    #[test]
    fn every_operation_at_f64() {
        for op in Operation::ALL {
            let e = check_operation::<f64>(op, 20, 7).unwrap();
            assert_eq!(e.instances, 20);
            assert!(e.passes(TOL_F64), "{e:?}");
        }
    }

    #[test]
    fn every_operation_at_f32() {
        for op in Operation::ALL {
            let e = check_operation::<f32>(op, 20, 11).unwrap();
            assert!(e.passes(TOL_F32), "{e:?}");
        }
    }

    #[test]
    fn composite_at_f64() {
        let e = check_composite::<f64>(5, 3, &LossWeights::default()).unwrap();
        assert!(e.checked > 0);
        assert!(e.passes(crate::gradcheck::COMPOSITE_TOL_F64), "{e:?}");
    }

    #[test]
    fn composite_at_f32() {
        let e = check_composite::<f32>(5, 5, &LossWeights::default()).unwrap();
        assert!(e.passes(TOL_F32), "{e:?}");
    }

    #[test]
    fn conditioning_rejects_kinks() {
        let mut params = ParamSet::<f64>::new();
        let x = params
            .add("x", Tensor::from_f64(&[2], &[0.5, 1e-4]).unwrap())
            .unwrap();
        let loss = move |g: &mut Graph<f64>, p: &Bound| {
            let y = g.relu(p[x]);
            Ok(g.sum(y))
        };
        assert!(!Conditioning::OPERATION.accepts(&params, &loss).unwrap());
        params
            .assign("x", Tensor::from_f64(&[2], &[0.5, -0.2]).unwrap())
            .unwrap();
        assert!(Conditioning::OPERATION.accepts(&params, &loss).unwrap());
    }

    #[test]
    fn names_are_unique() {
        let mut names: Vec<&str> = Operation::ALL.iter().map(|o| o.name()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), Operation::ALL.len());
    }
}
