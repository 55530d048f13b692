use serde::{Deserialize, Serialize};

use super::EncoderError;
use crate::preproc::DEFAULT_MAX_LEN;
use crate::scalar::Precision;

/// Shape and regularization of the transformer encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            layers: 2,
            hidden_dim: 128,
            heads: 4,
            ffn_dim: 256,
            max_len: DEFAULT_MAX_LEN,
            vocab_size: 4096,
            dropout_rate: 0.1,
            seed: 42,
            precision: Precision::Single,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let fail = |m: String| Err(EncoderError::Config(m));
        if self.layers == 0 || self.hidden_dim == 0 || self.heads == 0 || self.ffn_dim == 0 {
            return fail("layers, hidden_dim, heads and ffn_dim must be positive".into());
        }
        if !self.hidden_dim.is_multiple_of(self.heads) {
            return fail(format!(
                "hidden_dim {} is not divisible by heads {}",
                self.hidden_dim, self.heads
            ));
        }
        if self.max_len < 8 {
            return fail(format!("max_len {} is below 8", self.max_len));
        }
        if self.vocab_size == 0 {
            return fail("vocab_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} is outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }
}

/// Optimization settings for fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a dev improvement before stopping.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-4,
            batch_size: 16,
            max_epochs: 20,
            patience: 3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 1.0,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let ok = self.learning_rate > 0.0
            && self.batch_size > 0
            && self.max_epochs > 0
            && self.patience >= 1
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.clip_norm >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(EncoderError::Config(format!("invalid training config {self:?}")))
        }
    }
}
