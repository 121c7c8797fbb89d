//! Adagrad for sparse shallow rows, Adam for the dense encoder tensors.

use crate::error::{Error, Result};
use crate::model::{Gradients, ModelParams, Real};

pub const ADAGRAD_EPS: f64 = 1e-10;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    pub shallow: f64,
    pub dense: f64,
}

/// Adagrad accumulators per shallow coordinate and Adam moments per dense
/// tensor coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub step: u64,
    pub entity_accum: Vec<T>,
    pub relation_accum: Vec<T>,
    /// Laid out like the entity encoder tensors followed by the relation
    /// encoder tensors.
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(model: &ModelParams<T>) -> Self {
        let dense: Vec<Vec<T>> = model
            .entity_encoder
            .tensors()
            .into_iter()
            .chain(model.relation_encoder.tensors())
            .map(|t| vec![T::zero(); t.len()])
            .collect();
        OptimizerState {
            step: 0,
            entity_accum: vec![T::zero(); model.entity_shallow.data.len()],
            relation_accum: vec![T::zero(); model.relation_shallow.data.len()],
            first_moment: dense.clone(),
            second_moment: dense,
        }
    }
}

/// One Adagrad step on a row: `acc += g^2; p -= lr * g / (sqrt(acc) + eps)`.
pub fn adagrad_row<T: Real>(param: &mut [T], accum: &mut [T], grad: &[T], lr: f64) {
    let lr = T::from_f64(lr);
    let eps = T::from_f64(ADAGRAD_EPS);
    for ((p, a), g) in param.iter_mut().zip(accum.iter_mut()).zip(grad) {
        *a += *g * *g;
        *p -= lr * *g / (a.sqrt() + eps);
    }
}

/// One bias-corrected Adam step at (1-based) step `t`.
pub fn adam_tensor<T: Real>(param: &mut [T], m: &mut [T], v: &mut [T], grad: &[T], lr: f64, t: u64) {
    let b1 = T::from_f64(ADAM_BETA1);
    let b2 = T::from_f64(ADAM_BETA2);
    let c1 = T::from_f64(1.0 - ADAM_BETA1.powf(t as f64));
    let c2 = T::from_f64(1.0 - ADAM_BETA2.powf(t as f64));
    let lr = T::from_f64(lr);
    let eps = T::from_f64(ADAM_EPS);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Applies one optimizer step. Only shallow rows present in `grads` change.
pub fn apply_update<T: Real>(
    state: &mut OptimizerState<T>,
    model: &mut ModelParams<T>,
    grads: &Gradients<T>,
    rates: LearningRates,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFinite(format!(
            "gradient at optimizer step {}",
            state.step + 1
        )));
    }
    state.step += 1;
    let dim = model.config.dim;
    for (id, g) in &grads.entity_rows {
        let range = *id as usize * dim..(*id as usize + 1) * dim;
        adagrad_row(
            &mut model.entity_shallow.data[range.clone()],
            &mut state.entity_accum[range],
            g,
            rates.shallow,
        );
    }
    for (id, g) in &grads.relation_rows {
        let range = *id as usize * dim..(*id as usize + 1) * dim;
        adagrad_row(
            &mut model.relation_shallow.data[range.clone()],
            &mut state.relation_accum[range],
            g,
            rates.shallow,
        );
    }
    let params = model
        .entity_encoder
        .tensors_mut()
        .into_iter()
        .chain(model.relation_encoder.tensors_mut());
    let grad_tensors = grads
        .entity_encoder
        .tensors()
        .into_iter()
        .chain(grads.relation_encoder.tensors());
    for (((p, g), m), v) in params
        .zip(grad_tensors)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        adam_tensor(p, m, v, g, rates.dense, state.step);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DecoderKind, EncoderVariant, ModelConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> ModelParams<f64> {
        let cfg = ModelConfig {
            variant: EncoderVariant::ConcatMlpResidual,
            decoder: DecoderKind::ComplEx,
            dim: 2,
            hidden: 3,
            entity_feature_dim: 2,
            relation_feature_dim: 2,
            num_entities: 4,
            num_relations: 2,
            relation_feature_rows: 1,
        };
        ModelParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_model() {
        let mut m = model();
        let before = m.clone();
        let mut state = OptimizerState::new(&m);
        let mut g = Gradients::zeros_like(&m);
        g.entity_rows.push((1, vec![0.0, 0.0]));
        let rates = LearningRates { shallow: 0.1, dense: 0.01 };
        apply_update(&mut state, &mut m, &g, rates).unwrap();
        assert_eq!(m, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adagrad_single_coordinate() {
        let mut p = [1.0f64];
        let mut acc = [0.0];
        adagrad_row(&mut p, &mut acc, &[3.0], 0.1);
        assert_eq!(acc[0], 9.0);
        let expected = 1.0 - 0.1 * 3.0 / (9.0f64.sqrt() + ADAGRAD_EPS);
        assert_eq!(p[0], expected);
    }

    #[test]
    fn adam_two_identical_steps() {
        // Hand recurrence: m1 = 0.1g, v1 = 0.001g^2, m2 = 0.19g, v2 = 0.001999g^2;
        // bias correction makes both steps lr * g / (|g| + eps).
        let g = 0.5f64;
        let lr = 0.01;
        let mut p = [0.0f64];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_tensor(&mut p, &mut m, &mut v, &[g], lr, 1);
        let step1 = lr * (0.1 * g / 0.1) / ((0.001 * g * g / 0.001).sqrt() + ADAM_EPS);
        assert!((p[0] + step1).abs() < 1e-15);
        assert!((m[0] - 0.05).abs() < 1e-15);
        assert!((v[0] - 0.00025).abs() < 1e-15);
        adam_tensor(&mut p, &mut m, &mut v, &[g], lr, 2);
        let m_hat = 0.19 * g / (1.0 - 0.81);
        let v_hat = 0.001999 * g * g / (1.0 - 0.998001);
        let step2 = lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        assert!((p[0] + step1 + step2).abs() < 1e-15);
        assert!((step2 - 0.01).abs() < 1e-9);
    }

    #[test]
    fn untouched_rows_unchanged() {
        let mut m = model();
        let before = m.clone();
        let mut state = OptimizerState::new(&m);
        let mut g = Gradients::zeros_like(&m);
        g.entity_rows.push((2, vec![0.3, -0.2]));
        apply_update(&mut state, &mut m, &g, LearningRates { shallow: 0.1, dense: 0.0 }).unwrap();
        for row in [0, 1, 3] {
            assert_eq!(m.entity_shallow.row(row), before.entity_shallow.row(row));
        }
        assert_ne!(m.entity_shallow.row(2), before.entity_shallow.row(2));
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut m = model();
        let before = m.clone();
        let mut state = OptimizerState::new(&m);
        let mut g = Gradients::zeros_like(&m);
        g.entity_rows.push((0, vec![1.0, 1.0]));
        g.entity_encoder.tensors_mut()[0][0] = 2.0;
        apply_update(&mut state, &mut m, &g, LearningRates { shallow: 0.0, dense: 0.0 }).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut m = model();
        let mut state = OptimizerState::new(&m);
        let mut g = Gradients::zeros_like(&m);
        g.relation_rows.push((0, vec![f64::NAN, 0.0]));
        let err = apply_update(&mut state, &mut m, &g, LearningRates { shallow: 0.1, dense: 0.1 });
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(state.step, 0);
    }
}
