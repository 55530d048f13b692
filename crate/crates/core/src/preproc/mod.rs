//! Offset-preserving tokenization, sentence splitting, subword segmentation
//! and BIO encoding.

mod bio;
mod tokenize;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CharSpan;

pub use bio::{align_to_subtokens, decode_bio, decode_word_tags, encode_sentence, spans_to_bio, BioTag};
pub use tokenize::{sentences, split_sentences, tokenize, Sentence, Token};
pub use vocab::{
    build_vocab, subword_encode, Vocabulary, CLS, DEFAULT_VOCAB_SIZE, E_MARK, PAD, SEP,
    SPECIAL_PIECES, S_MARK, UNK,
};

/// Default sequence length, shared by tagging and classification inputs.
pub const DEFAULT_MAX_LEN: usize = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PreprocError {
    #[error("vocabulary target {target} is below the {needed} pieces required")]
    Capacity { needed: usize, target: usize },
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),
    #[error("mentions at {0} and {1} overlap")]
    Conflict(CharSpan, CharSpan),
    #[error("expected {expected} tags, got {found}")]
    TagCount { expected: usize, found: usize },
    #[error("span {span} is outside sentence {sentence}")]
    Range { span: CharSpan, sentence: CharSpan },
    #[error("{needed} positions do not fit max_len {max_len}")]
    Length { needed: usize, max_len: usize },
}

/// Supervision attached to a sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    /// One tag per position (padding included).
    Tags(Vec<BioTag>),
    /// One class id for the whole sequence.
    Label(usize),
    Unlabeled,
}

/// Where a sequence came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub doc_id: String,
    pub sentence: CharSpan,
}

/// A padded subtoken sequence ready for the encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSequence {
    pub subtoken_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    /// Owning word of each position; `None` for special tokens and padding.
    pub word_index: Vec<Option<usize>>,
    pub target: Target,
    /// Positions of the `[S]` and `[E]` markers in classification inputs.
    pub markers: Option<(usize, usize)>,
    pub origin: Origin,
}

impl LabeledSequence {
    pub fn len(&self) -> usize {
        self.subtoken_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtoken_ids.is_empty()
    }

    /// Number of positions up to and including the last unmasked one.
    pub fn effective_len(&self) -> usize {
        self.attention_mask.iter().rposition(|&m| m == 1).map_or(0, |p| p + 1)
    }

    pub fn tags(&self) -> Option<&[BioTag]> {
        match &self.target {
            Target::Tags(t) => Some(t),
            _ => None,
        }
    }

    pub fn label(&self) -> Option<usize> {
        match self.target {
            Target::Label(l) => Some(l),
            _ => None,
        }
    }

    /// Whether position `i` carries a word piece (not special, not padding).
    pub fn is_word_piece(&self, i: usize) -> bool {
        self.attention_mask[i] == 1 && self.word_index[i].is_some()
    }
}
