//! Central finite-difference verification of the analytic gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::{batch_loss, loss_and_grads, Mode};
use super::model::EncoderModel;
use super::EncoderError;
use crate::preproc::LabeledSequence;
use crate::scalar::{Precision, Scalar};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this in magnitude are compared absolutely.
pub const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst: Option<ParamCheck>,
    pub checks: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// `|a - n| / max(|a|, |n|, ABS_FLOOR)`; zero when both are exactly zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

/// Parameter indices to check: spread over every tensor, with token-embedding
/// picks restricted to rows the batch actually reads.
fn sample_indices<S: Scalar>(
    m: &EncoderModel<S>,
    batch: &[LabeledSequence],
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(String, usize)> {
    let layout = m.layout();
    let hidden = m.config().hidden_dim;
    let mut used_rows: Vec<usize> = batch
        .iter()
        .flat_map(|s| s.subtoken_ids[..s.effective_len()].iter().map(|&i| i as usize))
        .collect();
    used_rows.sort_unstable();
    used_rows.dedup();

    let mut pools: Vec<(String, Vec<usize>)> = layout
        .tensors
        .iter()
        .filter(|t| t.numel() > 0)
        .map(|t| {
            let idx: Vec<usize> = if t.name == "embeddings.token" {
                used_rows
                    .iter()
                    .flat_map(|r| t.offset + r * hidden..t.offset + (r + 1) * hidden)
                    .collect()
            } else {
                t.range().collect()
            };
            (t.name.clone(), idx)
        })
        .collect();
    for (_, idx) in &mut pools {
        idx.shuffle(rng);
    }
    let mut picked = Vec::with_capacity(samples);
    let mut round = 0;
    while picked.len() < samples {
        let before = picked.len();
        for (name, idx) in &pools {
            if let Some(&i) = idx.get(round) {
                picked.push((name.clone(), i));
            }
        }
        if picked.len() == before {
            break;
        }
        round += 1;
    }
    picked
}

/// Compares analytic gradients against central differences on a sample of
/// at least `samples` parameters. Requires 64-bit parameters; dropout is off.
pub fn grad_check<S: Scalar>(
    m: &EncoderModel<S>,
    batch: &[LabeledSequence],
    mode: Mode,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport, EncoderError> {
    if S::PRECISION != Precision::Double {
        return Err(EncoderError::Config("gradient checks need 64-bit parameters".into()));
    }
    let (_, grads) = loss_and_grads(m, batch, mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = m.clone();
    let mut checks = Vec::new();
    let h = S::of(FD_STEP);
    for (tensor, i) in sample_indices(m, batch, samples, &mut rng) {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = batch_loss(&probe, batch, mode)?;
        probe.params_mut()[i] = orig - h;
        let down = batch_loss(&probe, batch, mode)?;
        probe.params_mut()[i] = orig;
        let numeric = ((up - down) / (h + h)).as_f64();
        let analytic = grads.0[i].as_f64();
        checks.push(ParamCheck {
            tensor,
            index: i,
            analytic,
            numeric,
            relative_error: relative_error(analytic, numeric),
        });
    }
    let worst = checks
        .iter()
        .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
        .cloned();
    Ok(GradCheckReport {
        checked: checks.len(),
        max_relative_error: worst.as_ref().map_or(0.0, |w| w.relative_error),
        worst,
        checks,
    })
}
