//! Adam with global-norm gradient clipping applied before the moment update.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::mat::Mat;
use super::params::ParamStore;
use super::tape::Gradients;
use super::KernelError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: BTreeMap<String, Mat>,
    v: BTreeMap<String, Mat>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

/// One clipped Adam step. The clip scale comes from the global norm of the
/// whole gradient set (one loss, one clip), but only entries whose name
/// exists in `params` are applied — the rest belong to other stores with
/// their own optimizers. Parameters without a gradient entry are untouched.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut ParamStore,
    grads: &Gradients,
    clip_norm: f64,
) -> Result<(), KernelError> {
    if !grads.all_finite() {
        return Err(KernelError::NonFinite("gradient".to_string()));
    }
    let norm = grads.global_norm();
    let scale = if clip_norm > 0.0 && norm > clip_norm {
        clip_norm / norm
    } else {
        1.0
    };

    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - state.beta1.powf(t);
    let bc2 = 1.0 - state.beta2.powf(t);

    for (name, grad) in grads.iter() {
        let param = match params.get(name) {
            Some(p) => p.clone(),
            None => continue,
        };
        if !param.same_shape(grad) {
            return Err(KernelError::ShapeMismatch {
                what: format!("gradient for {name}"),
                expected: (param.rows, param.cols),
                got: (grad.rows, grad.cols),
            });
        }
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Mat::zeros(param.rows, param.cols));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Mat::zeros(param.rows, param.cols));

        let mut updated = param;
        for i in 0..updated.len() {
            let g = grad.data[i] * scale;
            m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g;
            v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * g * g;
            let mhat = m.data[i] / bc1;
            let vhat = v.data[i] / bc2;
            updated.data[i] -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
        params.set(name, updated)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::tape::Tape;

    fn single_param(value: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("theta", Mat::scalar(value)).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = single_param(1.5);
        let mut state = AdamState::new(0.1);
        let mut t = Tape::new();
        let x = t.leaf("theta", Mat::scalar(1.5));
        let zero = t.constant(Mat::scalar(0.0));
        let y = t.mul(x, zero).unwrap();
        let g = t.backward(y).unwrap();
        adam_step(&mut state, &mut params, &g, 10.0).unwrap();
        assert_eq!(params.get("theta").unwrap().data[0], 1.5);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn clipping_halves_oversized_gradient() {
        // grads with norm 20 and clip 10 enter the moments at half size
        let mut t = Tape::new();
        let x = t.leaf("theta", Mat::row_vec(vec![0.0, 0.0]));
        let w = t.constant(Mat::col_vec(vec![12.0, 16.0])); // norm 20
        let y = t.matmul(x, w).unwrap();
        let y = t.mean(y);
        let g = t.backward(y).unwrap();
        assert!((g.global_norm() - 20.0).abs() < 1e-12);

        let mut params = ParamStore::new();
        params.insert("theta", Mat::row_vec(vec![0.0, 0.0])).unwrap();
        let mut state = AdamState::new(0.1);
        adam_step(&mut state, &mut params, &g, 10.0).unwrap();
        // first adam step moves each coordinate by -lr * sign(g) regardless of
        // magnitude, so check the stored first moment instead
        assert!((state.m.get("theta").unwrap().data[0] - 0.1 * 6.0).abs() < 1e-12);
        assert!((state.m.get("theta").unwrap().data[1] - 0.1 * 8.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_converges() {
        // 200 steps on f(theta) = theta^2 from theta0 = 1 at lr 0.1
        let mut params = single_param(1.0);
        let mut state = AdamState::new(0.1);
        for _ in 0..200 {
            let theta = params.get("theta").unwrap().clone();
            let mut t = Tape::new();
            let x = t.leaf("theta", theta);
            let y = t.mul(x, x).unwrap();
            let g = t.backward(y).unwrap();
            adam_step(&mut state, &mut params, &g, 10.0).unwrap();
        }
        assert!(params.get("theta").unwrap().data[0].abs() < 1e-2);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut params = single_param(0.0);
        let mut state = AdamState::new(0.1);
        let mut t = Tape::new();
        let x = t.leaf("theta", Mat::scalar(0.0));
        let y = t.log(x); // -inf value, inf gradient
        let y = t.sum(y);
        let g = t.backward(y).unwrap();
        assert!(adam_step(&mut state, &mut params, &g, 10.0).is_err());
    }
}
