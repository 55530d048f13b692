//! Transformer encoder with token and sequence heads, hand-written backward
//! pass, and a mini-batch trainer.

mod config;
pub mod gradcheck;
pub mod loss;
mod model;
pub mod optim;
pub mod params;
pub mod train;

use thiserror::Error;

use crate::corpus::CharSpan;

pub use config::{EncoderConfig, TrainConfig};
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{argmax, batch_loss, loss_and_grads, loss_and_grads_with_dropout, softmax, Mode};
pub use model::{EncoderModel, Gradients};
pub use optim::{optimizer_step, AdamState};
pub use params::{ParamLayout, TensorSpec, TOKEN_CLASSES};
pub use train::{fit, EpochRecord, FitOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("sequence of length {len} exceeds max_len {max_len}")]
    Length { len: usize, max_len: usize },
    #[error("index out of range: {0}")]
    Index(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("bad training target: {0}")]
    Target(String),
    #[error("non-finite loss on {doc_id} sentence {sentence}")]
    NonFinite { doc_id: String, sentence: CharSpan },
    #[error("empty batch")]
    EmptyBatch,
}
