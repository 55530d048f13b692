use super::model::{EncoderModel, Gradients};
use super::TrainConfig;
use crate::scalar::Scalar;

/// Running first and second moments for the adaptive-moment update.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub step: u64,
    first: Vec<S>,
    second: Vec<S>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            step: 0,
            first: vec![S::zero(); n_params],
            second: vec![S::zero(); n_params],
        }
    }
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping. A `max_norm` of zero disables clipping.
pub fn clip_global_norm<S: Scalar>(grads: &mut Gradients<S>, max_norm: f64) -> S {
    let norm = grads.norm();
    let limit = S::of(max_norm);
    if max_norm > 0.0 && norm > limit {
        grads.scale(limit / norm);
    }
    norm
}

/// One clipped, bias-corrected adaptive-moment update.
pub fn optimizer_step<S: Scalar>(
    state: &mut AdamState<S>,
    model: &mut EncoderModel<S>,
    grads: &Gradients<S>,
    tc: &TrainConfig,
) {
    let mut g = grads.clone();
    clip_global_norm(&mut g, tc.clip_norm);
    state.step += 1;
    let t = state.step as i32;
    let b1 = S::of(tc.beta1);
    let b2 = S::of(tc.beta2);
    let one = S::one();
    let c1 = one - b1.powi(t);
    let c2 = one - b2.powi(t);
    let lr = S::of(tc.learning_rate);
    let eps = S::of(tc.epsilon);
    let params = model.params_mut();
    for i in 0..params.len() {
        let gi = g.0[i];
        state.first[i] = b1 * state.first[i] + (one - b1) * gi;
        state.second[i] = b2 * state.second[i] + (one - b2) * gi * gi;
        let m_hat = state.first[i] / c1;
        let v_hat = state.second[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::scalar::Precision;

    fn tiny() -> EncoderModel<f64> {
        let cfg = EncoderConfig {
            layers: 1,
            hidden_dim: 4,
            heads: 2,
            ffn_dim: 4,
            max_len: 8,
            vocab_size: 8,
            dropout_rate: 0.0,
            seed: 3,
            precision: Precision::Double,
        };
        EncoderModel::init(cfg, 2).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut m = tiny();
        let before = m.params().to_vec();
        let mut st = AdamState::new(m.parameter_count());
        optimizer_step(&mut st, &mut m, &Gradients::zeros(before.len()), &TrainConfig::default());
        assert_eq!(m.params(), &before[..]);
    }

    #[test]
    fn first_step_on_quadratic_moves_lr_toward_minimum() {
        // loss = (p - 3)^2 on the first parameter only
        let mut m = tiny();
        let p0 = m.params()[0];
        let mut g = Gradients::zeros(m.parameter_count());
        g.0[0] = 2.0 * (p0 - 3.0);
        let tc = TrainConfig {
            learning_rate: 0.01,
            clip_norm: 0.0,
            ..Default::default()
        };
        let mut st = AdamState::new(m.parameter_count());
        optimizer_step(&mut st, &mut m, &g, &tc);
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        let expected = p0 + 0.01 * (1.0 - 1e-8 / (g.0[0].abs() + 1e-8));
        assert!((m.params()[0] - expected).abs() < 1e-15);
        assert!(m.params()[1..] == tiny().params()[1..]);
    }

    #[test]
    fn clipping_matches_prescaled_gradients() {
        let n = tiny().parameter_count();
        let mut g = Gradients::<f64>::zeros(n);
        g.0[0] = 6.0;
        g.0[5] = 8.0;
        assert!((g.norm() - 10.0).abs() < 1e-12);
        let mut scaled = g.clone();
        scaled.scale(0.1);
        let tc = TrainConfig {
            clip_norm: 1.0,
            ..Default::default()
        };
        let (mut a, mut b) = (tiny(), tiny());
        let (mut sa, mut sb) = (AdamState::new(n), AdamState::new(n));
        // second step exposes any difference in moment scale
        for _ in 0..2 {
            optimizer_step(&mut sa, &mut a, &g, &tc);
            optimizer_step(&mut sb, &mut b, &scaled, &tc);
        }
        for (x, y) in a.params().iter().zip(b.params()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
