use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use medctx::corpus::CharSpan;
use medctx::encoder::{
    argmax, batch_loss, grad_check, loss_and_grads, optimizer_step, softmax, AdamState, EncoderConfig,
    EncoderError, EncoderModel, Mode, TrainConfig,
};
use medctx::preproc::{BioTag, LabeledSequence, Origin, Target, CLS, E_MARK, PAD, SEP, S_MARK};
use medctx::scalar::Precision;

fn toy_config(layers: usize, hidden: usize, heads: usize, ffn: usize) -> EncoderConfig {
    EncoderConfig {
        layers,
        hidden_dim: hidden,
        heads,
        ffn_dim: ffn,
        max_len: 16,
        vocab_size: 20,
        dropout_rate: 0.0,
        seed: 11,
        precision: Precision::Double,
    }
}

fn origin() -> Origin {
    Origin {
        doc_id: "doc".into(),
        sentence: CharSpan::new(0, 10),
    }
}

/// `[CLS] w.. [SEP]` padded to `pad_to`, tagged with `tags` on the words.
fn tagged(words: &[u32], tags: &[BioTag], pad_to: usize) -> LabeledSequence {
    let mut ids = vec![CLS];
    ids.extend_from_slice(words);
    ids.push(SEP);
    let real = ids.len();
    ids.resize(pad_to.max(real), PAD);
    let n = ids.len();
    let mut word_index = vec![None; n];
    let mut t = vec![BioTag::O; n];
    for i in 0..words.len() {
        word_index[i + 1] = Some(i);
        t[i + 1] = tags[i];
    }
    LabeledSequence {
        subtoken_ids: ids,
        attention_mask: (0..n).map(|i| u8::from(i < real)).collect(),
        word_index,
        target: Target::Tags(t),
        markers: None,
        origin: origin(),
    }
}

/// `[CLS] a [S] m [E] b [SEP]` with a class label.
fn marked(a: u32, m: u32, b: u32, label: usize) -> LabeledSequence {
    let ids = vec![CLS, a, S_MARK, m, E_MARK, b, SEP];
    LabeledSequence {
        word_index: vec![None, Some(0), None, Some(1), None, Some(2), None],
        attention_mask: vec![1; ids.len()],
        subtoken_ids: ids,
        target: Target::Label(label),
        markers: Some((2, 4)),
        origin: origin(),
    }
}

fn set_tensor(m: &mut EncoderModel<f64>, name: &str, value: f64) {
    let r = m.layout().tensor(name).unwrap().range();
    m.params_mut()[r].fill(value);
}

// ---- independent scalar recomputation ----

struct Named<'a> {
    m: &'a EncoderModel<f64>,
}

impl Named<'_> {
    fn t(&self, name: &str) -> &[f64] {
        &self.m.params()[self.m.layout().tensor(name).unwrap().range()]
    }
}

fn affine(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let out = b.len();
    (0..out)
        .map(|j| b[j] + x.iter().enumerate().map(|(i, xi)| xi * w[i * out + j]).sum::<f64>())
        .collect()
}

fn norm(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / (var + 1e-5).sqrt() * g[i] + b[i])
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn scalar_forward(m: &EncoderModel<f64>, seq: &LabeledSequence) -> Vec<Vec<f64>> {
    let cfg = m.config();
    let (h, heads) = (cfg.hidden_dim, cfg.heads);
    let dh = h / heads;
    let p = Named { m };
    let n = seq.effective_len();
    let tok = p.t("embeddings.token");
    let pos = p.t("embeddings.position");
    let mut x: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let id = seq.subtoken_ids[i] as usize;
            (0..h).map(|j| tok[id * h + j] + pos[i * h + j]).collect()
        })
        .collect();
    for l in 0..cfg.layers {
        let w = |s: &str| p.t(&format!("layer{l}.{s}"));
        let q: Vec<_> = x.iter().map(|r| affine(r, w("attention.query.weight"), w("attention.query.bias"))).collect();
        let k: Vec<_> = x.iter().map(|r| affine(r, w("attention.key.weight"), w("attention.key.bias"))).collect();
        let v: Vec<_> = x.iter().map(|r| affine(r, w("attention.value.weight"), w("attention.value.bias"))).collect();
        let mut ctx = vec![vec![0.0; h]; n];
        for hd in 0..heads {
            let cols = hd * dh..(hd + 1) * dh;
            for i in 0..n {
                let scores: Vec<f64> = (0..n)
                    .map(|j| {
                        if seq.attention_mask[j] == 0 {
                            f64::NEG_INFINITY
                        } else {
                            cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt()
                        }
                    })
                    .collect();
                let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
                let z: f64 = e.iter().sum();
                for c in cols.clone() {
                    ctx[i][c] = (0..n).map(|j| e[j] / z * v[j][c]).sum();
                }
            }
        }
        x = (0..n)
            .map(|i| {
                let a = affine(&ctx[i], w("attention.output.weight"), w("attention.output.bias"));
                let r: Vec<f64> = x[i].iter().zip(&a).map(|(p, q)| p + q).collect();
                let x1 = norm(&r, w("attention.norm.gain"), w("attention.norm.bias"));
                let inner: Vec<f64> = affine(&x1, w("ffn.inner.weight"), w("ffn.inner.bias"))
                    .into_iter()
                    .map(gelu)
                    .collect();
                let f = affine(&inner, w("ffn.outer.weight"), w("ffn.outer.bias"));
                let r2: Vec<f64> = x1.iter().zip(&f).map(|(p, q)| p + q).collect();
                norm(&r2, w("ffn.norm.gain"), w("ffn.norm.bias"))
            })
            .collect();
    }
    x
}

/// Gives every parameter a distinct, non-trivial value.
fn perturbed(cfg: EncoderConfig, n_classes: usize) -> EncoderModel<f64> {
    let mut m = EncoderModel::<f64>::init(cfg, n_classes).unwrap();
    for (i, p) in m.params_mut().iter_mut().enumerate() {
        *p += 0.3 * ((i as f64) * 0.7548776).sin();
    }
    m
}

#[test]
fn init_is_deterministic_and_validates() {
    let cfg = toy_config(2, 8, 2, 16);
    let a = EncoderModel::<f64>::init(cfg.clone(), 4).unwrap();
    let b = EncoderModel::<f64>::init(cfg.clone(), 4).unwrap();
    assert_eq!(a.params(), b.params());
    assert!(a.params().iter().all(|p| p.abs() <= 1.0));

    let bad = EncoderConfig {
        heads: 3,
        hidden_dim: 64,
        ..cfg.clone()
    };
    assert!(matches!(EncoderModel::<f64>::init(bad, 2), Err(EncoderError::Config(_))));
    // precision must match the scalar type
    assert!(matches!(EncoderModel::<f32>::init(cfg, 2), Err(EncoderError::Config(_))));
}

#[test]
fn init_biases_zero_gains_one() {
    let m = EncoderModel::<f64>::init(toy_config(1, 8, 2, 16), 3).unwrap();
    for t in &m.layout().tensors {
        let vals = &m.params()[t.range()];
        if t.name.ends_with(".bias") {
            assert!(vals.iter().all(|&v| v == 0.0), "{}", t.name);
        } else if t.name.ends_with(".gain") {
            assert!(vals.iter().all(|&v| v == 1.0), "{}", t.name);
        } else {
            assert!(vals.iter().all(|&v| v.abs() < 0.02), "{}", t.name);
        }
    }
}

#[test]
fn parameter_count_matches_shape_sum() {
    let cfg = EncoderConfig {
        layers: 2,
        hidden_dim: 64,
        heads: 4,
        ffn_dim: 128,
        vocab_size: 4096,
        ..Default::default()
    };
    let (h, f, v, l, c) = (64, 128, 4096, 256, 5);
    let per_layer = 4 * (h * h + h) + 2 * (2 * h) + (h * f + f) + (f * h + h);
    let expected = v * h + l * h + 2 * per_layer + (h * 3 + 3) + (3 * h * c + c);
    let m = EncoderModel::<f32>::init(cfg, c).unwrap();
    assert_eq!(m.parameter_count(), expected);
}

#[test]
fn forward_matches_scalar_recomputation() {
    for (layers, heads) in [(1, 1), (1, 2), (2, 2)] {
        let m = perturbed(toy_config(layers, 8, heads, 12), 2);
        for seq in [tagged(&[], &[], 2), tagged(&[7], &[BioTag::B], 3), tagged(&[7, 9, 12], &[BioTag::O; 3], 8)] {
            let fast = m.forward(&seq).unwrap();
            let slow = scalar_forward(&m, &seq);
            assert_eq!(fast.nrows(), slow.len());
            for (i, row) in slow.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    assert_abs_diff_eq!(fast[[i, j]], *v, epsilon = 1e-12);
                }
            }
        }
    }
}

#[test]
fn single_token_one_layer_closed_form() {
    // one position: attention is the identity so ctx = value projection
    let m = perturbed(toy_config(1, 4, 2, 6), 0);
    let mut seq = tagged(&[], &[], 2);
    seq.subtoken_ids.truncate(1);
    seq.attention_mask.truncate(1);
    seq.word_index.truncate(1);
    seq.target = Target::Unlabeled;
    let p = Named { m: &m };
    let h = 4;
    let x: Vec<f64> = (0..h)
        .map(|j| p.t("embeddings.token")[CLS as usize * h + j] + p.t("embeddings.position")[j])
        .collect();
    let v = affine(&x, p.t("layer0.attention.value.weight"), p.t("layer0.attention.value.bias"));
    let a = affine(&v, p.t("layer0.attention.output.weight"), p.t("layer0.attention.output.bias"));
    let r: Vec<f64> = x.iter().zip(&a).map(|(p, q)| p + q).collect();
    let x1 = norm(&r, p.t("layer0.attention.norm.gain"), p.t("layer0.attention.norm.bias"));
    let inner: Vec<f64> = affine(&x1, p.t("layer0.ffn.inner.weight"), p.t("layer0.ffn.inner.bias"))
        .into_iter()
        .map(gelu)
        .collect();
    let f = affine(&inner, p.t("layer0.ffn.outer.weight"), p.t("layer0.ffn.outer.bias"));
    let r2: Vec<f64> = x1.iter().zip(&f).map(|(p, q)| p + q).collect();
    let expected = norm(&r2, p.t("layer0.ffn.norm.gain"), p.t("layer0.ffn.norm.bias"));
    let got = m.forward(&seq).unwrap();
    for j in 0..h {
        assert_abs_diff_eq!(got[[0, j]], expected[j], epsilon = 1e-12);
    }
}

#[test]
fn sequence_logits_two_class_recomputation() {
    let m = perturbed(toy_config(1, 4, 2, 6), 2);
    let seq = marked(8, 9, 10, 1);
    let hidden = scalar_forward(&m, &seq);
    let p = Named { m: &m };
    let mut feat = hidden[0].clone();
    feat.extend(&hidden[2]);
    feat.extend(&hidden[4]);
    let expected = affine(&feat, p.t("sequence_head.weight"), p.t("sequence_head.bias"));
    let got = m.sequence_logits(&m.forward(&seq).unwrap(), 2, 4).unwrap();
    for c in 0..2 {
        assert_abs_diff_eq!(got[c], expected[c], epsilon = 1e-12);
    }
    let hidden = m.forward(&seq).unwrap();
    assert!(matches!(m.sequence_logits(&hidden, 2, 7), Err(EncoderError::Index(_))));
}

#[test]
fn too_long_sequence_is_rejected() {
    let m = EncoderModel::<f64>::init(toy_config(1, 4, 2, 6), 0).unwrap();
    let seq = tagged(&[6; 15], &[BioTag::O; 15], 17);
    assert!(matches!(m.forward(&seq), Err(EncoderError::Length { len: 17, max_len: 16 })));
}

#[test]
fn attention_rows_sum_to_one_and_skip_padding() {
    let m = perturbed(toy_config(2, 8, 2, 12), 0);
    let seq = tagged(&[6, 7, 8], &[BioTag::O; 3], 9);
    for layer in m.attention_maps(&seq).unwrap() {
        for probs in layer {
            for row in probs.rows() {
                assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-6);
            }
        }
    }
    // a masked key inside the computed window gets zero weight
    let mut holed = tagged(&[6, 7, 8], &[BioTag::O; 3], 5);
    holed.attention_mask[2] = 0;
    for layer in m.attention_maps(&holed).unwrap() {
        for probs in layer {
            assert!(probs.column(2).iter().all(|&p| p == 0.0));
        }
    }
}

#[test]
fn padding_tail_does_not_change_real_outputs() {
    let m = perturbed(toy_config(2, 8, 2, 12), 0);
    let short = tagged(&[6, 7], &[BioTag::B, BioTag::I], 4);
    let mut long = tagged(&[6, 7], &[BioTag::B, BioTag::I], 12);
    let base = m.forward(&short).unwrap();
    // scrambled ids behind the mask
    for (i, id) in long.subtoken_ids.iter_mut().enumerate().skip(4) {
        *id = (i % 19) as u32;
    }
    let other = m.forward(&long).unwrap();
    for i in 0..4 {
        for j in 0..8 {
            assert_eq!(base[[i, j]], other[[i, j]]);
        }
    }
}

#[test]
fn inference_is_deterministic() {
    let m = perturbed(toy_config(2, 8, 2, 12), 3);
    let seq = marked(6, 7, 8, 0);
    assert_eq!(m.forward(&seq).unwrap(), m.forward(&seq).unwrap());
}

#[test]
fn zero_heads_give_uniform_distributions() {
    let mut m = perturbed(toy_config(1, 8, 2, 12), 4);
    for t in ["token_head.weight", "token_head.bias", "sequence_head.weight", "sequence_head.bias"] {
        set_tensor(&mut m, t, 0.0);
    }
    let seq = marked(6, 7, 8, 2);
    let hidden = m.forward(&seq).unwrap();
    for row in m.token_logits(&hidden).rows() {
        for p in softmax(&row.to_vec()) {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
        }
    }
    for p in softmax(&m.sequence_logits(&hidden, 2, 4).unwrap().to_vec()) {
        assert_abs_diff_eq!(p, 0.25, epsilon = 1e-12);
    }
    // uniform predictions give ln of the class count
    let tok = tagged(&[6, 7], &[BioTag::B, BioTag::O], 4);
    assert_abs_diff_eq!(batch_loss(&m, &[tok], Mode::Token).unwrap(), 3f64.ln(), epsilon = 1e-6);
    assert_abs_diff_eq!(batch_loss(&m, &[seq], Mode::Sequence).unwrap(), 4f64.ln(), epsilon = 1e-6);
}

#[test]
fn confident_correct_predictions_have_tiny_loss() {
    let mut m = perturbed(toy_config(1, 8, 2, 12), 2);
    set_tensor(&mut m, "token_head.weight", 0.0);
    let b = m.layout().tensor("token_head.bias").unwrap().offset;
    m.params_mut()[b..b + 3].copy_from_slice(&[-20.0, 20.0, -20.0]);
    let seq = tagged(&[6, 7, 8], &[BioTag::I; 3], 6);
    assert!(batch_loss(&m, &[seq], Mode::Token).unwrap() < 1e-8);
}

#[test]
fn loss_is_batch_order_invariant() {
    let m = perturbed(toy_config(2, 8, 2, 12), 3);
    let batch = vec![marked(6, 7, 8, 0), marked(9, 10, 11, 2), marked(12, 13, 14, 1)];
    let mut rev = batch.clone();
    rev.reverse();
    let (la, ga) = loss_and_grads(&m, &batch, Mode::Sequence).unwrap();
    let (lb, gb) = loss_and_grads(&m, &rev, Mode::Sequence).unwrap();
    assert_abs_diff_eq!(la, lb, epsilon = 1e-9);
    for (x, y) in ga.0.iter().zip(&gb.0) {
        assert_abs_diff_eq!(x, y, epsilon = 1e-9);
    }
    let tok = vec![
        tagged(&[6, 7], &[BioTag::B, BioTag::I], 4),
        tagged(&[8, 9, 10], &[BioTag::O, BioTag::B, BioTag::O], 8),
    ];
    let rev: Vec<_> = tok.iter().rev().cloned().collect();
    assert_abs_diff_eq!(
        batch_loss(&m, &tok, Mode::Token).unwrap(),
        batch_loss(&m, &rev, Mode::Token).unwrap(),
        epsilon = 1e-9
    );
}

#[test]
fn labels_do_not_change_logits() {
    let m = perturbed(toy_config(1, 8, 2, 12), 0);
    let a = tagged(&[6, 7, 8], &[BioTag::B, BioTag::O, BioTag::I], 6);
    let b = tagged(&[6, 7, 8], &[BioTag::O, BioTag::I, BioTag::B], 6);
    assert_eq!(m.token_logits(&m.forward(&a).unwrap()), m.token_logits(&m.forward(&b).unwrap()));
}

#[test]
fn empty_batch_and_bad_targets_are_errors() {
    let m = perturbed(toy_config(1, 8, 2, 12), 2);
    assert!(matches!(loss_and_grads(&m, &[], Mode::Token), Err(EncoderError::EmptyBatch)));
    let tok = tagged(&[6], &[BioTag::B], 3);
    assert!(matches!(loss_and_grads(&m, &[tok], Mode::Sequence), Err(EncoderError::Target(_))));
    let out_of_range = marked(6, 7, 8, 5);
    assert!(matches!(
        loss_and_grads(&m, &[out_of_range], Mode::Sequence),
        Err(EncoderError::Target(_))
    ));
}

#[test]
fn non_finite_loss_reports_origin() {
    let mut m = perturbed(toy_config(1, 8, 2, 12), 2);
    let b = m.layout().tensor("sequence_head.bias").unwrap().offset;
    m.params_mut()[b] = f64::INFINITY;
    let err = batch_loss(&m, &[marked(6, 7, 8, 1)], Mode::Sequence).unwrap_err();
    match err {
        EncoderError::NonFinite { doc_id, sentence } => {
            assert_eq!(doc_id, "doc");
            assert_eq!(sentence, CharSpan::new(0, 10));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn gradients_pass_finite_difference_check_token_mode() {
    let m = perturbed(toy_config(2, 8, 2, 12), 0);
    let batch = vec![
        tagged(&[6, 7, 8], &[BioTag::B, BioTag::I, BioTag::O], 7),
        tagged(&[9, 10], &[BioTag::O, BioTag::B], 4),
    ];
    let report = grad_check(&m, &batch, Mode::Token, 240, 1).unwrap();
    assert!(report.checked >= 200);
    assert!(report.passes(1e-4), "worst: {:?}", report.worst);
}

#[test]
fn gradients_pass_finite_difference_check_sequence_mode() {
    let m = perturbed(toy_config(2, 8, 2, 12), 3);
    let batch = vec![marked(6, 7, 8, 0), marked(9, 10, 11, 2)];
    let report = grad_check(&m, &batch, Mode::Sequence, 240, 2).unwrap();
    assert!(report.checked >= 200);
    assert!(report.passes(1e-4), "worst: {:?}", report.worst);
}

#[test]
fn grad_check_requires_double_precision() {
    let cfg = EncoderConfig {
        precision: Precision::Single,
        ..toy_config(1, 4, 2, 4)
    };
    let m = EncoderModel::<f32>::init(cfg, 0).unwrap();
    let seq = tagged(&[6], &[BioTag::B], 3);
    assert!(matches!(grad_check(&m, &[seq], Mode::Token, 10, 0), Err(EncoderError::Config(_))));
}

#[test]
fn memorization_reduces_loss() {
    let cfg = toy_config(1, 16, 2, 32);
    let mut m = EncoderModel::<f64>::init(cfg, 3).unwrap();
    let batch: Vec<_> = (0..10u32).map(|i| marked(6 + i % 7, 7 + i % 11, 8 + i % 5, (i % 3) as usize)).collect();
    let tc = TrainConfig {
        learning_rate: 3e-2,
        ..Default::default()
    };
    let mut state = AdamState::new(m.parameter_count());
    let start = batch_loss(&m, &batch, Mode::Sequence).unwrap();
    for _ in 0..50 {
        let (_, g) = loss_and_grads(&m, &batch, Mode::Sequence).unwrap();
        optimizer_step(&mut state, &mut m, &g, &tc);
    }
    let end = batch_loss(&m, &batch, Mode::Sequence).unwrap();
    assert!(end <= 0.1 * start, "loss {start} -> {end}");
}

proptest! {
    #[test]
    fn softmax_normalized_and_shift_invariant(z in prop::collection::vec(-30.0f64..30.0, 1..8), c in -50.0f64..50.0) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        prop_assert_eq!(argmax(&z), argmax(&p));
    }
}
