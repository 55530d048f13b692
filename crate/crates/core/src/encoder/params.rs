//! Flat parameter storage with a named tensor index.

use serde::{Deserialize, Serialize};

use super::EncoderConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    Uniform,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub init: Init,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.numel()
    }
}

/// Offsets of one transformer layer's tensors in the flat buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerOffsets {
    pub q_w: usize,
    pub q_b: usize,
    pub k_w: usize,
    pub k_b: usize,
    pub v_w: usize,
    pub v_b: usize,
    pub o_w: usize,
    pub o_b: usize,
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub ff1_w: usize,
    pub ff1_b: usize,
    pub ff2_w: usize,
    pub ff2_b: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub tensors: Vec<TensorSpec>,
    pub(crate) token_emb: usize,
    pub(crate) pos_emb: usize,
    pub(crate) layers: Vec<LayerOffsets>,
    pub(crate) tok_head_w: usize,
    pub(crate) tok_head_b: usize,
    pub(crate) seq_head_w: usize,
    pub(crate) seq_head_b: usize,
    pub total: usize,
}

struct Builder {
    tensors: Vec<TensorSpec>,
    next: usize,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        let offset = self.next;
        let spec = TensorSpec {
            name,
            shape: shape.to_vec(),
            offset,
            init,
        };
        self.next += spec.numel();
        self.tensors.push(spec);
        offset
    }
}

/// Output classes of the token head (B, I, O).
pub const TOKEN_CLASSES: usize = 3;

impl ParamLayout {
    pub fn new(cfg: &EncoderConfig, n_classes: usize) -> Self {
        let h = cfg.hidden_dim;
        let f = cfg.ffn_dim;
        let mut b = Builder {
            tensors: Vec::new(),
            next: 0,
        };
        let token_emb = b.add("embeddings.token".into(), &[cfg.vocab_size, h], Init::Uniform);
        let pos_emb = b.add("embeddings.position".into(), &[cfg.max_len, h], Init::Uniform);
        let layers = (0..cfg.layers)
            .map(|i| {
                let mut t = |n: &str, shape: &[usize], init| b.add(format!("layer{i}.{n}"), shape, init);
                LayerOffsets {
                    q_w: t("attention.query.weight", &[h, h], Init::Uniform),
                    q_b: t("attention.query.bias", &[h], Init::Zeros),
                    k_w: t("attention.key.weight", &[h, h], Init::Uniform),
                    k_b: t("attention.key.bias", &[h], Init::Zeros),
                    v_w: t("attention.value.weight", &[h, h], Init::Uniform),
                    v_b: t("attention.value.bias", &[h], Init::Zeros),
                    o_w: t("attention.output.weight", &[h, h], Init::Uniform),
                    o_b: t("attention.output.bias", &[h], Init::Zeros),
                    ln1_g: t("attention.norm.gain", &[h], Init::Ones),
                    ln1_b: t("attention.norm.bias", &[h], Init::Zeros),
                    ff1_w: t("ffn.inner.weight", &[h, f], Init::Uniform),
                    ff1_b: t("ffn.inner.bias", &[f], Init::Zeros),
                    ff2_w: t("ffn.outer.weight", &[f, h], Init::Uniform),
                    ff2_b: t("ffn.outer.bias", &[h], Init::Zeros),
                    ln2_g: t("ffn.norm.gain", &[h], Init::Ones),
                    ln2_b: t("ffn.norm.bias", &[h], Init::Zeros),
                }
            })
            .collect();
        let tok_head_w = b.add("token_head.weight".into(), &[h, TOKEN_CLASSES], Init::Uniform);
        let tok_head_b = b.add("token_head.bias".into(), &[TOKEN_CLASSES], Init::Zeros);
        let seq_head_w = b.add("sequence_head.weight".into(), &[3 * h, n_classes], Init::Uniform);
        let seq_head_b = b.add("sequence_head.bias".into(), &[n_classes], Init::Zeros);
        ParamLayout {
            total: b.next,
            tensors: b.tensors,
            token_emb,
            pos_emb,
            layers,
            tok_head_w,
            tok_head_b,
            seq_head_w,
            seq_head_b,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}
