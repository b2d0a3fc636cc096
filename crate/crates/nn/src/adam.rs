//! Adam optimizer with bias correction.

use crate::densenet::DenseNet;
use crate::layers::ParamKind;
use crate::scalar::Real;

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

/// Applies one Adam update to a parameter slice in place.
///
/// `t` is the 1-based step count including this update.
pub fn adam_update<F: Real>(
    value: &mut [F],
    grad: &[F],
    m: &mut [F],
    v: &mut [F],
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    debug_assert!(t >= 1);
    let b1 = F::from_f64(beta1);
    let b2 = F::from_f64(beta2);
    let one_m_b1 = F::from_f64(1.0 - beta1);
    let one_m_b2 = F::from_f64(1.0 - beta2);
    let corr1 = F::from_f64(1.0 / (1.0 - beta1.powi(t as i32)));
    let corr2 = F::from_f64(1.0 / (1.0 - beta2.powi(t as i32)));
    let lr = F::from_f64(lr);
    let eps = F::from_f64(eps);
    for i in 0..value.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + one_m_b1 * g;
        v[i] = b2 * v[i] + one_m_b2 * g * g;
        let m_hat = m[i] * corr1;
        let v_hat = v[i] * corr2;
        value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// First and second moment buffers for every learnable parameter of a
/// model, in visitation order.
pub struct AdamState<F> {
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> AdamState<F> {
    pub fn new(model: &mut DenseNet<F>) -> Self {
        let mut m = Vec::new();
        model.visit_params(&mut |_, p| {
            if p.kind == ParamKind::Learnable {
                m.push(vec![F::ZERO; p.value.len()]);
            }
        });
        let v = m.clone();
        Self { t: 0, beta1: DEFAULT_BETA1, beta2: DEFAULT_BETA2, eps: DEFAULT_EPS, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One optimizer step over the model's accumulated gradients.
    pub fn step(&mut self, model: &mut DenseNet<F>, lr: f64) {
        self.t += 1;
        let t = self.t;
        let (beta1, beta2, eps) = (self.beta1, self.beta2, self.eps);
        let mut idx = 0;
        let m = &mut self.m;
        let v = &mut self.v;
        model.visit_params(&mut |_, p| {
            if p.kind == ParamKind::Learnable {
                adam_update(
                    p.value.data_mut(),
                    p.grad.data(),
                    &mut m[idx],
                    &mut v[idx],
                    t,
                    lr,
                    beta1,
                    beta2,
                    eps,
                );
                idx += 1;
            }
        });
        assert_eq!(idx, m.len(), "model/optimizer parameter count changed");
    }
}
