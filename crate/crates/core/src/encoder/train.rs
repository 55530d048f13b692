use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grads_with_dropout, Mode};
use super::model::EncoderModel;
use super::optim::{optimizer_step, AdamState};
use super::{EncoderError, TrainConfig};
use crate::preproc::LabeledSequence;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_score: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome<S: Scalar> {
    /// Parameters from the epoch with the best dev score.
    pub model: EncoderModel<S>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Mini-batch training with early stopping on a dev score (higher is better).
///
/// After every epoch `dev_score` is evaluated; the parameters of the first
/// epoch reaching the best score are kept. Training stops at `max_epochs` or
/// once `patience` epochs pass without a strict improvement.
pub fn fit<S, F, E>(
    mut model: EncoderModel<S>,
    examples: &[LabeledSequence],
    mode: Mode,
    tc: &TrainConfig,
    mut dev_score: F,
) -> Result<FitOutcome<S>, E>
where
    S: Scalar,
    F: FnMut(&EncoderModel<S>) -> Result<f64, E>,
    E: From<EncoderError>,
{
    tc.validate()?;
    if examples.is_empty() {
        return Err(EncoderError::EmptyBatch.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut state = AdamState::new(model.parameter_count());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Vec<S>)> = None;
    let mut stale = 0;

    for epoch in 1..=tc.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<LabeledSequence> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let step_seed = tc.seed ^ (state.step + 1).wrapping_mul(0xD1B5_4A32_D192_ED03);
            let (loss, grads) = loss_and_grads_with_dropout(&model, &batch, mode, step_seed)?;
            optimizer_step(&mut state, &mut model, &grads, tc);
            loss_sum += loss.as_f64();
            batches += 1;
        }
        let score = dev_score(&model)?;
        let train_loss = loss_sum / batches as f64;
        log::info!("epoch {epoch}: train loss {train_loss:.5}, dev score {score:.4}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            dev_score: score,
        });
        match &best {
            Some((b, _, _)) if score <= *b => {
                stale += 1;
                if stale >= tc.patience {
                    log::info!("no dev improvement for {stale} epochs; stopping");
                    break;
                }
            }
            _ => {
                best = Some((score, epoch, model.params().to_vec()));
                stale = 0;
            }
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch runs");
    model.params_mut().copy_from_slice(&params);
    Ok(FitOutcome {
        model,
        history,
        best_epoch,
    })
}
