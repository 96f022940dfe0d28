//! The full model: encoder, context module, predictor and joint network.

use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{Graph, Var};
use crate::chunk_mask::{build_mask, ChunkSpec, LeftContext};
use crate::context::{ContextConfig, ContextModule};
use crate::distillation::{mse_loss, total_loss_var, LossWeights};
use crate::encoder::{frames_after_frontend, Encoder, EncoderConfig};
use crate::params::{Bound, Init, ParamSet};
use crate::rng::seeded;
use crate::transducer::{
    greedy_decode, lattice_loss_var, DecoderState, Emission, FastEmitLoss, Joint, Predictor,
};
use crate::{Error, Real, Result, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub context: ContextConfig,
    /// Predictor LSTM hidden size.
    pub pred_dim: usize,
    pub joint_dim: usize,
    pub vocab_size: usize,
}

impl ModelConfig {
    pub fn desk(feat_dim: usize, vocab_size: usize) -> Self {
        Self {
            encoder: EncoderConfig::desk(feat_dim),
            context: ContextConfig::desk(),
            pred_dim: 16,
            joint_dim: 32,
            vocab_size,
        }
    }

    /// Published dimensions: 12×512 conformer, 768-dim context, 512 LSTM, 640 joint.
    pub fn published(feat_dim: usize, vocab_size: usize) -> Self {
        Self {
            encoder: EncoderConfig::published(feat_dim),
            context: ContextConfig::published(),
            pred_dim: 512,
            joint_dim: 640,
            vocab_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.context.validate()?;
        if self.pred_dim == 0 || self.joint_dim == 0 {
            return Err(Error::Parameter(
                "predictor and joint dimensions must be positive".into(),
            ));
        }
        if self.vocab_size < 2 {
            return Err(Error::Vocabulary(
                "vocabulary needs a blank plus one symbol".into(),
            ));
        }
        Ok(())
    }

    /// Width of a context-enriched frame-embedding.
    pub fn enriched_dim(&self) -> usize {
        self.encoder.d_model + self.context.teacher_dim
    }
}

#[derive(Clone, Debug)]
pub struct SensModel {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub context: ContextModule,
    pub predictor: Predictor,
    pub joint: Joint,
}

/// Loss terms of one utterance.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub transducer: FastEmitLoss,
    /// Distillation MSE, when a teacher embedding was supplied.
    pub mse: Option<f64>,
}

/// Values produced by an offline decode.
#[derive(Clone, Debug)]
pub struct OfflineOutput<T> {
    /// Frame-embeddings `H[T×d]`.
    pub frames: Tensor<T>,
    /// `[T×(d+teacher_dim)]` after context attachment.
    pub enriched: Tensor<T>,
    /// One `[1×teacher_dim]` embedding per chunk.
    pub contexts: Vec<Tensor<T>>,
    pub emissions: Vec<Emission>,
}

impl OfflineOutput<f32> {
    pub fn tokens(&self) -> Vec<usize> {
        self.emissions.iter().map(|e| e.token).collect()
    }
}

impl SensModel {
    /// Builds the model and its freshly initialized parameters.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<(Self, ParamSet<f32>)> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut rng = seeded(seed);
        let mut init = Init::new(&mut params, &mut rng);
        let encoder = Encoder::new(&mut init, &config.encoder)?;
        let context = ContextModule::new(&mut init, &config.context, config.encoder.d_model)?;
        let predictor = Predictor::new(&mut init, config.vocab_size, config.pred_dim)?;
        let joint = Joint::new(
            &mut init,
            config.enriched_dim(),
            config.pred_dim,
            config.joint_dim,
            config.vocab_size,
        )?;
        let model = Self {
            config: config.clone(),
            encoder,
            context,
            predictor,
            joint,
        };
        Ok((model, params))
    }

    /// Builds the model around named tensors (e.g. from a checkpoint); every
    /// parameter must be present with its expected shape and nothing extra.
    pub fn from_tensors(
        config: &ModelConfig,
        tensors: Vec<(String, Tensor<f32>)>,
    ) -> Result<(Self, ParamSet<f32>)> {
        let (model, mut params) = Self::new(config, 0)?;
        if tensors.len() != params.len() {
            return Err(Error::Format(alloc::format!(
                "checkpoint holds {} tensors, model expects {}",
                tensors.len(),
                params.len()
            )));
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for (name, t) in tensors {
            params.assign(&name, t)?;
            if !seen.insert(name.clone()) {
                return Err(Error::Format(alloc::format!("tensor {name} appears twice")));
            }
        }
        Ok((model, params))
    }

    /// Checks that `params` carries exactly this model's tensors.
    pub fn validate_params<T: Real>(&self, params: &ParamSet<T>) -> Result<()> {
        let (_, reference) = Self::new(&self.config, 0)?;
        if reference.len() != params.len() {
            return Err(Error::shape(
                "parameters",
                &[reference.len()],
                &[params.len()],
            ));
        }
        for ((rn, rt), (pn, pt)) in reference.iter().zip(params.iter()) {
            if rn != pn || rt.shape() != pt.shape() {
                return Err(Error::Format(alloc::format!(
                    "parameter {pn} does not match expected {rn}"
                )));
            }
        }
        Ok(())
    }

    fn check_features<T: Real>(&self, features: &Tensor<T>) -> Result<usize> {
        let s = features.shape();
        if s.len() != 2 || s[1] != self.config.encoder.feat_dim {
            return Err(Error::shape("features", s, &[self.config.encoder.feat_dim]));
        }
        Ok(frames_after_frontend(s[0]))
    }

    /// Composite loss of one utterance: FastEmit-regularized transducer loss
    /// plus `α · MSE` against `teacher` (skipped when `teacher` is `None`).
    ///
    /// `spec.total_frames()` must equal the post-frontend frame count.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_loss<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        features: &Tensor<T>,
        targets: &[usize],
        teacher: Option<&Tensor<T>>,
        spec: &ChunkSpec,
        weights: &LossWeights,
    ) -> Result<LossParts> {
        weights.validate()?;
        let frames = self.check_features(features)?;
        if spec.total_frames() != frames {
            return Err(Error::shape(
                "forward_loss",
                &[spec.total_frames()],
                &[frames],
            ));
        }
        let x = g.constant(features.clone());
        let mask = build_mask(spec);
        let h = self.encoder.encode(g, p, x, &mask)?;
        let (enriched, contexts) = self.context.enrich(g, p, h, spec)?;
        let pred = self.predictor.sequence(g, p, targets)?;
        let lattice = self.joint.lattice(g, p, enriched, pred)?;
        let (rnnt, transducer) =
            lattice_loss_var(g, lattice, frames, targets, weights.lambda_fastemit)?;
        match teacher {
            Some(t) => {
                let mse = mse_loss(g, &contexts, t)?;
                let value = g.value(mse).item().as_f64();
                let total = total_loss_var(g, rnnt, mse, weights)?;
                Ok(LossParts {
                    total,
                    transducer,
                    mse: Some(value),
                })
            }
            None => Ok(LossParts {
                total: rnnt,
                transducer,
                mse: None,
            }),
        }
    }

    /// Chunk-masked offline forward and greedy decode. `window` overrides the
    /// context module's configured window.
    pub fn decode_offline<T: Real>(
        &self,
        params: &ParamSet<T>,
        features: &Tensor<T>,
        chunk_size: usize,
        left: LeftContext,
        window: Option<LeftContext>,
        max_symbols: usize,
    ) -> Result<OfflineOutput<T>> {
        let frames = self.check_features(features)?;
        let spec = ChunkSpec::new(chunk_size.min(frames).max(1), left, frames)?;
        let mut g = Graph::new();
        let p = params.bind_frozen(&mut g);
        let x = g.constant(features.clone());
        let h = self.encoder.encode(&mut g, &p, x, &build_mask(&spec))?;
        let window = window.unwrap_or(self.context.config.window);
        let (enriched, contexts) = self
            .context
            .enrich_with_window(&mut g, &p, h, &spec, window)?;
        let enriched = g.value(enriched).clone();
        let mut state = DecoderState::new(&self.predictor, params)?;
        let emissions = greedy_decode(
            &self.predictor,
            &self.joint,
            params,
            &enriched,
            &mut state,
            0,
            max_symbols,
        )?;
        Ok(OfflineOutput {
            frames: g.value(h).clone(),
            enriched,
            contexts: contexts.iter().map(|&c| g.value(c).clone()).collect(),
            emissions,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_tensors_must_match() {
        let cfg = ModelConfig::desk(8, 5);
        let (model, params) = SensModel::new(&cfg, 3).unwrap();
        model.validate_params(&params).unwrap();
        let named: Vec<(String, Tensor<f32>)> =
            params.iter().map(|(n, t)| (n.into(), t.clone())).collect();
        let (_, loaded) = SensModel::from_tensors(&cfg, named.clone()).unwrap();
        assert_eq!(loaded.iter().count(), params.len());
        let mut short = named;
        short.pop();
        assert!(SensModel::from_tensors(&cfg, short).is_err());
    }

    #[test]
    fn published_dimensions_line_up() {
        let cfg = ModelConfig::published(80, 100);
        assert_eq!(cfg.enriched_dim(), 1280);
        cfg.validate().unwrap();
    }

    #[test]
    fn loss_is_finite_and_decode_runs() {
        let cfg = ModelConfig::desk(4, 4);
        let (model, params) = SensModel::new(&cfg, 1).unwrap();
        let feats =
            Tensor::new(&[16, 4], (0..64).map(|i| (i as f32 * 0.37).sin()).collect()).unwrap();
        let spec = ChunkSpec::new(2, LeftContext::Chunks(1), 4).unwrap();
        let teacher = Tensor::full(&[16], 0.25f32);
        let mut g = Graph::new();
        let p = params.bind(&mut g);
        let parts = model
            .forward_loss(
                &mut g,
                &p,
                &feats,
                &[1, 2],
                Some(&teacher),
                &spec,
                &LossWeights::default(),
            )
            .unwrap();
        assert!(g.value(parts.total).item().is_finite());
        let out = model
            .decode_offline(&params, &feats, 2, LeftContext::Chunks(1), None, 5)
            .unwrap();
        assert_eq!(out.frames.shape(), &[4, 32]);
        assert_eq!(out.enriched.shape(), &[4, 48]);
        assert_eq!(out.contexts.len(), 2);
    }
}
