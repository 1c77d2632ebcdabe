//! Backpropagation-through-time training with BCE or max-pooling losses,
//! Adam on the tanh-reparameterised weights, straight-through weight
//! quantization and early stopping.

pub mod adam;
pub mod bptt;
pub mod loss;
pub mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::Adam;
pub use bptt::{bptt_gradients, effective_gradients, latent_gradients, Gradients};
pub use loss::{bce_loss, loss_and_logit_grad, max_pool_loss, softplus, LabeledSequence, LossKind};
pub use trainer::{dataset_loss, freeze_level2, quantization_schedule, train, EpochRecord, History};

use crate::models::{ModelError, ModelKind};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("bad labels: {0}")]
    Label(String),
    #[error("both frame sets are empty")]
    EmptyFrameSets,
    #[error("non-finite gradient in matrix {0}")]
    NonFiniteGradient(String),
    #[error("training diverged at epoch {epoch} (validation loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("quantization level {to} needs a level-{} model, got level {from}", .to - 1)]
    SkippedLevel { from: u8, to: u8 },
    #[error("{0} set is empty")]
    EmptyDataset(&'static str),
    #[error("gradients are undefined with quantized activations (level 2 is not trained)")]
    QuantizedActivations,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Optimiser and schedule settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// 0 trains float weights, 1 trains with quantized weights in the
    /// forward pass.
    pub quant_level: u8,
    pub quant_bits: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 400,
            patience: 25,
            seed: 0,
            loss: LossKind::MaxPool,
            quant_level: 0,
            quant_bits: 4,
        }
    }
}

impl TrainConfig {
    /// Defaults with the learning rate used for `kind`.
    pub fn for_kind(kind: ModelKind) -> Self {
        TrainConfig { learning_rate: default_learning_rate(kind), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.epsilon <= 0.0 || self.batch_size == 0 || self.patience == 0 {
            return bad("epsilon, batch_size and patience must be positive");
        }
        if self.quant_level > 1 {
            return bad("only levels 0 and 1 are trained; level 2 freezes the weights");
        }
        if self.quant_level == 1 && !(2..=16).contains(&self.quant_bits) {
            return bad("quant_bits must lie in 2..=16");
        }
        Ok(())
    }
}

pub fn default_learning_rate(kind: ModelKind) -> f64 {
    if kind.is_recurrent() {
        0.002
    } else {
        0.005
    }
}

#[cfg(test)]
mod tests;
