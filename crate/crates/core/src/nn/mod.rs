//! The convolutional classifier: forward pass, backpropagation, dropout,
//! Adam, checkpoints and a finite-difference gradient check.
//!
//! All arithmetic is `f64`.

mod adam;
pub mod gradcheck;
pub mod layers;
mod network;
mod params;

pub use adam::{adam_step, AdamState};
pub use network::{
    argmax, cross_entropy, evaluate, forward, loss_and_grad, predict, predict_proba, ForwardCache,
    Mode, SampleCache, PROB_FLOOR,
};
pub use params::*;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("gradient contains a non-finite value")]
    NonFiniteGradient,
    #[error("unsupported modality {0}; expected one of 6, 9, 12, 18")]
    UnsupportedModality(usize),
    #[error("invalid hyperparameter {name}: {reason}")]
    InvalidHyperparam { name: &'static str, reason: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a `min_delta` improvement of validation loss before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            dropout_rate: 0.3,
            batch_size: 64,
            max_epochs: 3000,
            patience: 50,
            min_delta: 1e-4,
            seed: 42,
        }
    }
}

impl Hyperparams {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |name, reason: &str| Err(NnError::InvalidHyperparam { name, reason: reason.into() });
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam_beta", "must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon", "must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate", "must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience", "must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs", "must be at least 1");
        }
        if !(self.min_delta >= 0.0) {
            return bad("min_delta", "must be non-negative");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        assert!(Hyperparams::default().validate().is_ok());
        for h in [
            Hyperparams { dropout_rate: 1.0, ..Default::default() },
            Hyperparams { batch_size: 0, ..Default::default() },
            Hyperparams { patience: 0, ..Default::default() },
            Hyperparams { learning_rate: -1.0, ..Default::default() },
        ] {
            assert!(h.validate().is_err());
        }
    }
}
