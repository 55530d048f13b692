use thiserror::Error;

use crate::corpus::CorpusError;
use crate::encoder::EncoderError;
use crate::eval::EvalError;
use crate::preproc::PreprocError;

/// Failures while building examples, training or running task models.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Preproc(#[from] PreprocError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
