//! Central finite-difference utilities. These evaluate the model only
//! through its forward pass, so they stay independent of the analytic
//! backward implementations they are used to check.

use crate::layers::{Layer, Mode, ParamKind};
use crate::tensor::Tensor;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::cell::RefCell;

/// Central-difference gradient of a scalar function with respect to a
/// vector of scalars reached through get/set callbacks.
pub fn central_difference(
    len: usize,
    get: &mut dyn FnMut(usize) -> f64,
    set: &mut dyn FnMut(usize, f64),
    loss: &mut dyn FnMut() -> f64,
    step: f64,
) -> Vec<f64> {
    let mut grads = Vec::with_capacity(len);
    for i in 0..len {
        let original = get(i);
        set(i, original + step);
        let plus = loss();
        set(i, original - step);
        let minus = loss();
        set(i, original);
        grads.push((plus - minus) / (2.0 * step));
    }
    grads
}

/// Worst relative disagreement between analytic and numeric gradients,
/// with a small floor so matching near-zero pairs do not blow up.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Checks a layer's input and learnable-parameter gradients against
/// central differences of loss = sum(forward(x) * r), where r is a fixed
/// pseudo-random weighting. Returns the worst relative error seen.
pub fn check_layer<L: Layer<f64>>(mut layer: L, x: Tensor<f64>, seed: u64, step: f64) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let out = layer.forward(&x, Mode::Train);
    let mut r = Tensor::zeros(out.shape());
    for v in r.data_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    let dot = |a: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    };

    layer.visit_params("p", &mut |_, p| p.zero_grad());
    let _ = layer.forward(&x, Mode::Train);
    let dx = layer.backward(&r);
    let mut analytic_params: Vec<Vec<f64>> = Vec::new();
    layer.visit_params("p", &mut |_, p| {
        if p.kind == ParamKind::Learnable {
            analytic_params.push(p.grad.data().to_vec());
        }
    });

    let layer = RefCell::new(layer);
    let x = RefCell::new(x);
    let mut worst = 0.0f64;

    let x_len = x.borrow().len();
    let fd_x = central_difference(
        x_len,
        &mut |i| x.borrow().data()[i],
        &mut |i, v| x.borrow_mut().data_mut()[i] = v,
        &mut || dot(&layer.borrow_mut().forward(&x.borrow(), Mode::Train), &r),
        step,
    );
    worst = worst.max(max_rel_err(dx.data(), &fd_x));

    for (slot, analytic) in analytic_params.iter().enumerate() {
        let with_param = |i: usize, f: &mut dyn FnMut(&mut f64)| {
            let mut cur = 0usize;
            layer.borrow_mut().visit_params("p", &mut |_, p| {
                if p.kind == ParamKind::Learnable {
                    if cur == slot {
                        f(&mut p.value.data_mut()[i]);
                    }
                    cur += 1;
                }
            });
        };
        let fd = central_difference(
            analytic.len(),
            &mut |i| {
                let mut out = 0.0;
                with_param(i, &mut |v| out = *v);
                out
            },
            &mut |i, value| with_param(i, &mut |v| *v = value),
            &mut || dot(&layer.borrow_mut().forward(&x.borrow(), Mode::Train), &r),
            step,
        );
        worst = worst.max(max_rel_err(analytic, &fd));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        // f(x) = sum x_i^2, df/dx_i = 2 x_i
        let x = std::cell::RefCell::new(vec![1.0, -2.0, 0.5]);
        let mut get = |i: usize| x.borrow()[i];
        let mut set = |i: usize, v: f64| x.borrow_mut()[i] = v;
        let mut loss = || x.borrow().iter().map(|v| v * v).sum::<f64>();
        let g = central_difference(3, &mut get, &mut set, &mut loss, 1e-6);
        let expected = [2.0, -4.0, 1.0];
        assert!(max_rel_err(&expected, &g) < 1e-8);
    }

    #[test]
    fn rel_err_floors_near_zero() {
        assert!(max_rel_err(&[0.0], &[1e-9]) < 1e-2);
        assert!(max_rel_err(&[1.0], &[1.1]) > 0.05);
    }
}
