//! Gradient computation, optimizers and the single-threaded training step.

use alloc::string::String;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use rand::seq::SliceRandom;

use crate::autodiff::Graph;
use crate::chunk_mask::{sample_dct_config, ChunkSpec, DctPolicy};
use crate::distillation::LossWeights;
use crate::encoder::frames_after_frontend;
use crate::model::SensModel;
use crate::params::ParamSet;
use crate::rng::{derived, Rng};
use crate::{Error, Result, Tensor};

/// One training utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    /// Raw feature frames `[raw_T×feat_dim]`.
    pub features: Tensor<f32>,
    pub targets: Vec<usize>,
    /// Teacher embedding of the full transcription.
    pub teacher: Option<Tensor<f32>>,
}

impl Example {
    pub fn frames(&self) -> usize {
        frames_after_frontend(self.features.shape()[0])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Decoupled weight decay, applied as `p ← p − lr·decay·p`.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip.
    pub max_grad_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate: 0.05,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_grad_norm: Some(5.0),
        }
    }
}

impl OptimizerConfig {
    /// Adam with the published learning rate and decay.
    pub fn published() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 0.0008,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.max_grad_norm.is_none_or(|c| c > 0.0);
        if !ok {
            return Err(Error::Parameter("invalid optimizer settings".into()));
        }
        Ok(())
    }
}

/// Per-parameter gradients, `None` where a parameter did not contribute.
pub type ParamGrads = Vec<Option<Tensor<f32>>>;

/// Loss values and gradients of one example.
#[derive(Clone, Debug)]
pub struct ExampleResult {
    pub rnnt: f64,
    pub mse: Option<f64>,
    pub total: f64,
    pub grads: ParamGrads,
}

fn first_non_finite(params: &ParamSet<f32>, grads: Option<&ParamGrads>) -> Option<String> {
    if let Some((name, _)) = params.iter().find(|(_, t)| !t.all_finite()) {
        return Some(String::from(name));
    }
    let grads = grads?;
    params
        .ids()
        .zip(grads)
        .find(|(_, g)| g.as_ref().is_some_and(|g| !g.all_finite()))
        .map(|(id, _)| alloc::format!("gradient of {}", params.name(id)))
}

fn non_finite(what: &str, value: f64, culprit: Option<String>) -> Error {
    Error::NonFinite(alloc::format!(
        "{what} is {value}; first non-finite tensor: {}",
        culprit.unwrap_or_else(|| String::from(
            "none among parameters and gradients (forward intermediate)"
        ))
    ))
}

/// `spec` adapted to a sequence of `frames` frames: full-context samples
/// stay full-context, chunked samples keep `S` (clamped) and `P`.
pub fn spec_for_frames(sample: &ChunkSpec, frames: usize) -> Result<ChunkSpec> {
    if sample.chunk_size() >= sample.total_frames() {
        return ChunkSpec::full_context(frames);
    }
    ChunkSpec::new(
        sample.chunk_size().min(frames),
        sample.left_context(),
        frames,
    )
}

/// Loss and per-parameter gradients of one example under `spec`
/// (sized for this example).
pub fn example_gradients(
    model: &SensModel,
    params: &ParamSet<f32>,
    example: &Example,
    spec: &ChunkSpec,
    weights: &LossWeights,
) -> Result<ExampleResult> {
    if !example.features.all_finite() {
        return Err(Error::NonFinite(alloc::format!(
            "features of {} contain non-finite values",
            example.id
        )));
    }
    let mut g = Graph::new();
    let p = params.bind(&mut g);
    let parts = model.forward_loss(
        &mut g,
        &p,
        &example.features,
        &example.targets,
        example.teacher.as_ref(),
        spec,
        weights,
    )?;
    let total = f64::from(g.value(parts.total).item());
    if !total.is_finite() {
        return Err(non_finite("loss", total, first_non_finite(params, None)));
    }
    let grads = g.backward(parts.total)?;
    let grads: ParamGrads = params.ids().map(|id| grads.get(p[id]).cloned()).collect();
    if let Some(culprit) = first_non_finite(params, Some(&grads)) {
        return Err(non_finite("gradient", f64::NAN, Some(culprit)));
    }
    Ok(ExampleResult {
        rnnt: parts.transducer.rnnt,
        mse: parts.mse,
        total,
        grads,
    })
}

/// Mean of per-example gradients, summed in slice order.
pub fn average_gradients(results: &[ExampleResult]) -> ParamGrads {
    let Some(first) = results.first() else {
        return Vec::new();
    };
    let n = results.len() as f32;
    (0..first.grads.len())
        .map(|i| {
            let mut acc: Option<Vec<f32>> = None;
            let mut shape = Vec::new();
            for r in results {
                if let Some(g) = &r.grads[i] {
                    shape = g.shape().to_vec();
                    match acc.as_mut() {
                        Some(a) => a.iter_mut().zip(g.data()).for_each(|(a, &b)| *a += b),
                        None => acc = Some(g.data().to_vec()),
                    }
                }
            }
            acc.map(|mut a| {
                a.iter_mut().for_each(|v| *v /= n);
                Tensor::new(&shape, a).expect("gradient shape")
            })
        })
        .collect()
}

/// SGD or Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    steps: u64,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: &ParamSet<f32>) -> Result<Self> {
        config.validate()?;
        let (first, second) = match config.kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam => {
                let z: Vec<Vec<f32>> = params
                    .iter()
                    .map(|(_, t)| alloc::vec![0.0; t.len()])
                    .collect();
                (z.clone(), z)
            }
        };
        Ok(Self {
            config,
            steps: 0,
            first,
            second,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies `grads` to every parameter accepted by `trainable`.
    pub fn step(
        &mut self,
        params: &mut ParamSet<f32>,
        grads: &[Option<Tensor<f32>>],
        trainable: &dyn Fn(&str) -> bool,
    ) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::shape("optimizer", &[params.len()], &[grads.len()]));
        }
        self.steps += 1;
        let c = self.config;
        let norm: f64 = grads
            .iter()
            .flatten()
            .flat_map(|g| g.data().iter())
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        let clip = match c.max_grad_norm {
            Some(max) if norm > max => (max / norm) as f32,
            _ => 1.0,
        };
        let lr = c.learning_rate as f32;
        let decay = (c.learning_rate * c.weight_decay) as f32;
        let (b1, b2, eps) = (c.beta1 as f32, c.beta2 as f32, c.epsilon as f32);
        let t = self.steps as i32;
        let (bc1, bc2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
        let ids: Vec<_> = params.ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            if !trainable(params.name(id)) {
                continue;
            }
            let Some(grad) = &grads[i] else { continue };
            let p = params.get_mut(id).data_mut();
            match c.kind {
                OptimizerKind::Sgd => {
                    for (w, &g) in p.iter_mut().zip(grad.data()) {
                        *w -= lr * g * clip + decay * *w;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    for (j, (w, &g)) in p.iter_mut().zip(grad.data()).enumerate() {
                        let g = g * clip;
                        m[j] = b1 * m[j] + (1.0 - b1) * g;
                        v[j] = b2 * v[j] + (1.0 - b2) * g * g;
                        let mh = m[j] / bc1;
                        let vh = v[j] / bc2;
                        *w -= lr * mh / (vh.sqrt() + eps) + decay * *w;
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub policy: DctPolicy,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    /// Parameters whose name starts with any of these prefixes are not updated.
    pub frozen_prefixes: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            policy: DctPolicy::default(),
            optimizer: OptimizerConfig::default(),
            batch_size: 8,
            steps: 2000,
            seed: 0,
            frozen_prefixes: Vec::new(),
        }
    }
}

fn is_trainable(frozen_prefixes: &[String], name: &str) -> bool {
    !frozen_prefixes.iter().any(|p| name.starts_with(p.as_str()))
}

/// Mean losses of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub rnnt: f64,
    pub mse: f64,
    pub total: f64,
}

impl StepLog {
    /// `step<TAB>loss_rnnt<TAB>loss_mse<TAB>loss_total`.
    pub fn line(&self) -> String {
        alloc::format!(
            "{}\t{:.6}\t{:.6}\t{:.6}",
            self.step,
            self.rnnt,
            self.mse,
            self.total
        )
    }
}

/// Batching, chunk sampling and parameter updates over a fixed example set.
pub struct Trainer {
    config: TrainConfig,
    optimizer: Optimizer,
    batch_rng: Rng,
    chunk_rng: Rng,
    order: Vec<usize>,
    cursor: usize,
    step: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, params: &ParamSet<f32>, examples: usize) -> Result<Self> {
        config.weights.validate()?;
        config.policy.validate()?;
        if config.batch_size == 0 || examples == 0 {
            return Err(Error::Parameter(
                "training needs a positive batch size and at least one example".into(),
            ));
        }
        Ok(Self {
            optimizer: Optimizer::new(config.optimizer, params)?,
            batch_rng: derived(config.seed, 1),
            chunk_rng: derived(config.seed, 2),
            order: (0..examples).collect(),
            cursor: examples,
            step: 0,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Indices of the next batch; the example order is reshuffled each epoch.
    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.config.batch_size);
        while out.len() < self.config.batch_size.min(self.order.len()) {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.batch_rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }

    /// Chunk configuration for a batch whose longest sequence has `max_frames` frames.
    pub fn sample_chunking(&mut self, max_frames: usize) -> Result<ChunkSpec> {
        sample_dct_config(&self.config.policy, max_frames, &mut self.chunk_rng)
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        is_trainable(&self.config.frozen_prefixes, name)
    }

    /// Averages the batch's results and updates the parameters.
    pub fn apply(
        &mut self,
        params: &mut ParamSet<f32>,
        results: &[ExampleResult],
    ) -> Result<StepLog> {
        let grads = average_gradients(results);
        let frozen = &self.config.frozen_prefixes;
        self.optimizer
            .step(params, &grads, &|name| is_trainable(frozen, name))?;
        self.step += 1;
        let n = results.len() as f64;
        Ok(StepLog {
            step: self.step,
            rnnt: results.iter().map(|r| r.rnnt).sum::<f64>() / n,
            mse: results.iter().map(|r| r.mse.unwrap_or(0.0)).sum::<f64>() / n,
            total: results.iter().map(|r| r.total).sum::<f64>() / n,
        })
    }

    /// One sequential step over the next batch.
    pub fn train_step(
        &mut self,
        model: &SensModel,
        params: &mut ParamSet<f32>,
        examples: &[Example],
    ) -> Result<StepLog> {
        let batch = self.next_batch();
        let max_frames = batch
            .iter()
            .map(|&i| examples[i].frames())
            .max()
            .unwrap_or(1);
        let sample = self.sample_chunking(max_frames)?;
        let weights = self.config.weights;
        let results = batch
            .iter()
            .map(|&i| {
                let spec = spec_for_frames(&sample, examples[i].frames())?;
                example_gradients(model, params, &examples[i], &spec, &weights)
            })
            .collect::<Result<Vec<_>>>()?;
        self.apply(params, &results)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunk_mask::LeftContext;
    use crate::model::ModelConfig;

    #[test]
    fn spec_adaptation() {
        let full = ChunkSpec::full_context(10).unwrap();
        assert_eq!(spec_for_frames(&full, 6).unwrap().chunk_size(), 6);
        let chunked = ChunkSpec::new(8, LeftContext::Unlimited, 10).unwrap();
        let s = spec_for_frames(&chunked, 5).unwrap();
        assert_eq!(
            (s.chunk_size(), s.left_context()),
            (5, LeftContext::Unlimited)
        );
    }

    #[test]
    fn non_finite_loss_names_the_tensor() {
        let cfg = ModelConfig::desk(4, 4);
        let (model, mut params) = SensModel::new(&cfg, 0).unwrap();
        let id = params.id("joint.output.bias").unwrap();
        params.get_mut(id).data_mut()[0] = f32::NAN;
        let ex = Example {
            id: "x".into(),
            features: Tensor::full(&[8, 4], 0.1),
            targets: alloc::vec![1],
            teacher: None,
        };
        let spec = ChunkSpec::full_context(2).unwrap();
        let err =
            example_gradients(&model, &params, &ex, &spec, &LossWeights::default()).unwrap_err();
        assert_eq!(err.category(), "non-finite");
        assert!(alloc::format!("{err}").contains("joint.output.bias"));
    }

    #[test]
    fn fixed_seed_gives_identical_curves() {
        let cfg = ModelConfig::desk(4, 4);
        let examples: Vec<Example> = (0..4)
            .map(|i| Example {
                id: alloc::format!("{i}"),
                features: Tensor::new(
                    &[12, 4],
                    (0..48)
                        .map(|j| ((i * 48 + j) as f32 * 0.13).sin())
                        .collect(),
                )
                .unwrap(),
                targets: alloc::vec![1 + i % 3],
                teacher: Some(Tensor::full(&[16], 0.25)),
            })
            .collect();
        let run = || {
            let (model, mut params) = SensModel::new(&cfg, 4).unwrap();
            let config = TrainConfig {
                batch_size: 2,
                seed: 9,
                ..TrainConfig::default()
            };
            let mut t = Trainer::new(config, &params, examples.len()).unwrap();
            (0..4)
                .map(|_| {
                    t.train_step(&model, &mut params, &examples)
                        .unwrap()
                        .total
                        .to_bits()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
