//! Predictor, joint network, lattice loss and greedy decoding.

mod greedy;
mod joint;
mod loss;
mod predictor;
mod vocab;

pub use greedy::{greedy_decode, DecoderState, Emission, DEFAULT_MAX_SYMBOLS};
pub use joint::Joint;
pub use loss::{
    fastemit_loss, forward_backward, label_path_loss, lattice_loss_var, rnnt_loss,
    rnnt_loss_with_grad, FastEmitLoss, JointLattice, LatticeVariables,
};
pub use predictor::{Predictor, PredictorState};
pub use vocab::{Vocabulary, BLANK};
