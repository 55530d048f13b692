use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{EncoderModel, Gradients};
use super::EncoderError;
use crate::preproc::LabeledSequence;
use crate::scalar::Scalar;

/// Which head a batch trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Per-subtoken BIO tagging.
    Token,
    /// One label per sequence from the marker-pooled features.
    Sequence,
}

/// Numerically stable log-softmax.
pub fn log_softmax<S: Scalar>(z: &[S]) -> Vec<S> {
    let max = z.iter().fold(S::neg_infinity(), |m, &x| m.max(x));
    let lse = max + z.iter().map(|&x| (x - max).exp()).sum::<S>().ln();
    z.iter().map(|&x| x - lse).collect()
}

pub fn softmax<S: Scalar>(z: &[S]) -> Vec<S> {
    log_softmax(z).into_iter().map(|x| x.exp()).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<S: Scalar>(z: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in z.iter().enumerate().skip(1) {
        if x > z[best] {
            best = i;
        }
    }
    best
}

/// Number of positions contributing to the token-mode loss.
fn scored_positions(seq: &LabeledSequence) -> usize {
    let n = seq.effective_len();
    (0..n).filter(|&i| seq.is_word_piece(i)).count()
}

fn dropout_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Gradient of the loss with respect to the head's logits.
enum HeadGrad<S> {
    Token(Array2<S>),
    Sequence(Array1<S>),
}

/// Cross-entropy of one example, divided by `norm`; gradients accumulate into
/// `grads` when given.
fn example_loss<S: Scalar>(
    m: &EncoderModel<S>,
    seq: &LabeledSequence,
    mode: Mode,
    norm: S,
    rng: Option<&mut ChaCha8Rng>,
    grads: Option<&mut [S]>,
) -> Result<S, EncoderError> {
    let cache = m.forward_cached(seq, rng)?;
    let hidden = &cache.output;
    let (loss, head_grad) = match mode {
        Mode::Token => {
            let tags = seq.tags().ok_or_else(|| {
                EncoderError::Target(format!("sequence from {} has no tags", seq.origin.doc_id))
            })?;
            let logits = m.token_logits(hidden);
            let mut loss = S::zero();
            let mut d_logits = Array2::zeros(logits.raw_dim());
            for i in 0..logits.nrows() {
                if !seq.is_word_piece(i) {
                    continue;
                }
                let lp = log_softmax(&logits.row(i).to_vec());
                let y = tags[i].index();
                loss -= lp[y];
                for (c, &l) in lp.iter().enumerate() {
                    let target = if c == y { S::one() } else { S::zero() };
                    d_logits[[i, c]] = (l.exp() - target) / norm;
                }
            }
            (loss / norm, HeadGrad::Token(d_logits))
        }
        Mode::Sequence => {
            let label = seq.label().ok_or_else(|| {
                EncoderError::Target(format!("sequence from {} has no label", seq.origin.doc_id))
            })?;
            let (s_pos, e_pos) = seq.markers.ok_or_else(|| {
                EncoderError::Target(format!("sequence from {} has no markers", seq.origin.doc_id))
            })?;
            if label >= m.n_classes() {
                return Err(EncoderError::Target(format!(
                    "label {label} outside {} classes",
                    m.n_classes()
                )));
            }
            let logits = m.sequence_logits(hidden, s_pos, e_pos)?;
            let lp = log_softmax(&logits.to_vec());
            let d: Array1<S> = lp
                .iter()
                .enumerate()
                .map(|(c, &l)| (l.exp() - if c == label { S::one() } else { S::zero() }) / norm)
                .collect();
            (-lp[label] / norm, HeadGrad::Sequence(d))
        }
    };
    if !loss.is_finite() {
        return Err(EncoderError::NonFinite {
            doc_id: seq.origin.doc_id.clone(),
            sentence: seq.origin.sentence,
        });
    }
    if let Some(grads) = grads {
        let d_hidden = match head_grad {
            HeadGrad::Token(d) => m.token_head_backward(hidden, &d, grads),
            HeadGrad::Sequence(d) => {
                let (s_pos, e_pos) = seq.markers.expect("checked above");
                m.sequence_head_backward(hidden, s_pos, e_pos, &d, grads)?
            }
        };
        m.backward(&cache, d_hidden, grads);
    }
    Ok(loss)
}

fn normalizer<S: Scalar>(batch: &[LabeledSequence], mode: Mode) -> Result<S, EncoderError> {
    if batch.is_empty() {
        return Err(EncoderError::EmptyBatch);
    }
    let n = match mode {
        Mode::Token => batch.iter().map(scored_positions).sum::<usize>().max(1),
        Mode::Sequence => batch.len(),
    };
    Ok(S::of(n as f64))
}

/// Mean cross-entropy and its gradient, dropout off.
///
/// Token mode averages over word-piece positions of the whole batch; sequence
/// mode averages over examples. Per-example gradients are summed in batch
/// order, so results do not depend on the thread count.
pub fn loss_and_grads<S: Scalar>(
    m: &EncoderModel<S>,
    batch: &[LabeledSequence],
    mode: Mode,
) -> Result<(S, Gradients<S>), EncoderError> {
    run_batch(m, batch, mode, None)
}

/// As [`loss_and_grads`] with dropout active, seeded per example.
pub fn loss_and_grads_with_dropout<S: Scalar>(
    m: &EncoderModel<S>,
    batch: &[LabeledSequence],
    mode: Mode,
    seed: u64,
) -> Result<(S, Gradients<S>), EncoderError> {
    run_batch(m, batch, mode, Some(seed))
}

fn run_batch<S: Scalar>(
    m: &EncoderModel<S>,
    batch: &[LabeledSequence],
    mode: Mode,
    seed: Option<u64>,
) -> Result<(S, Gradients<S>), EncoderError> {
    let norm = normalizer::<S>(batch, mode)?;
    let parts: Vec<Result<(S, Vec<S>), EncoderError>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            let mut g = vec![S::zero(); m.parameter_count()];
            let mut rng = seed.map(|s| dropout_rng(s, i));
            let loss = example_loss(m, seq, mode, norm, rng.as_mut(), Some(&mut g))?;
            Ok((loss, g))
        })
        .collect();
    let mut total = S::zero();
    let mut grads = Gradients::zeros(m.parameter_count());
    for part in parts {
        let (loss, g) = part?;
        total += loss;
        for (a, b) in grads.0.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok((total, grads))
}

/// Mean cross-entropy without gradients, dropout off.
pub fn batch_loss<S: Scalar>(
    m: &EncoderModel<S>,
    batch: &[LabeledSequence],
    mode: Mode,
) -> Result<S, EncoderError> {
    let norm = normalizer::<S>(batch, mode)?;
    let parts: Vec<Result<S, EncoderError>> = batch
        .par_iter()
        .map(|seq| example_loss(m, seq, mode, norm, None, None))
        .collect();
    let mut total = S::zero();
    for p in parts {
        total += p?;
    }
    Ok(total)
}
