//! Finite-difference checks of every layer's backward pass, plus an
//! end-to-end check of a small model under cross-entropy loss. The
//! numeric side only ever calls forward passes.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use requant_nn::gradcheck::{central_difference, check_layer, max_rel_err};
use requant_nn::layers::{
    AvgPool2d, BatchNorm2d, Conv2d, GlobalAvgPool, Layer, Linear, MaxPool2d, Mode, Relu,
};
use requant_nn::loss::cross_entropy_with_logits;
use requant_nn::ops::{channel_concat, channel_split};
use requant_nn::{DenseNet, ModelConfig, ParamKind, Tensor};
use std::cell::RefCell;

const TOL: f64 = 1e-4;
const STEP: f64 = 1e-5;

fn random_tensor(shape: &[usize], rng: &mut ChaCha12Rng) -> Tensor<f64> {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.random_range(-1.5..1.5);
    }
    t
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn random_init<L: Layer<f64>>(layer: &mut L, rng: &mut ChaCha12Rng) {
    layer.visit_params("p", &mut |name, p| {
        if p.kind == ParamKind::Learnable && !name.contains("gamma") && !name.contains("beta") {
            for v in p.value.data_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    });
}

#[test]
fn conv_stem_shape_7x7_stride2_pad3() {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let mut conv = Conv2d::new(2, 3, 7, 2, 3);
    random_init(&mut conv, &mut rng);
    let x = random_tensor(&[2, 2, 9, 11], &mut rng);
    let err = check_layer(conv, x, 100, STEP);
    assert!(err <= TOL, "rel err {err}");
}

#[test]
fn conv_3x3_stride1_pad1() {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let mut conv = Conv2d::new(3, 4, 3, 1, 1);
    random_init(&mut conv, &mut rng);
    let x = random_tensor(&[2, 3, 5, 6], &mut rng);
    let err = check_layer(conv, x, 101, STEP);
    assert!(err <= TOL, "rel err {err}");
}

#[test]
fn conv_1x1() {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let mut conv = Conv2d::new(4, 2, 1, 1, 0);
    random_init(&mut conv, &mut rng);
    let x = random_tensor(&[3, 4, 4, 5], &mut rng);
    let err = check_layer(conv, x, 102, STEP);
    assert!(err <= TOL, "rel err {err}");
}

#[test]
fn batchnorm_train_mode() {
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let mut bn = BatchNorm2d::new(3, 1e-5, 0.9);
    // move gamma/beta off their identity init
    bn.visit_params("p", &mut |name, p| {
        if p.kind == ParamKind::Learnable {
            for v in p.value.data_mut() {
                *v = if name.contains("gamma") {
                    1.0 + rng.random_range(-0.3..0.3)
                } else {
                    rng.random_range(-0.3..0.3)
                };
            }
        }
    });
    let x = random_tensor(&[4, 3, 3, 4], &mut rng);
    let err = check_layer(bn, x, 103, STEP);
    assert!(err <= TOL, "rel err {err}");
}

#[test]
fn relu_activation() {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let x = random_tensor(&[2, 3, 4, 4], &mut rng);
    let err = check_layer(Relu::new(), x, 104, STEP);
    assert!(err <= TOL, "rel err {err}");
}

#[test]
fn maxpool_3x3_stride2_pad1() {
    let mut rng = ChaCha12Rng::seed_from_u64(6);
    let x = random_tensor(&[2, 2, 7, 8], &mut rng);
    let err = check_layer(MaxPool2d::new(3, 2, 1), x, 105, STEP);
    assert!(err <= TOL, "rel err {err}");
}

#[test]
fn avgpool_2x2_stride2() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let x = random_tensor(&[2, 3, 6, 6], &mut rng);
    let err = check_layer(AvgPool2d::new(2, 2), x, 106, STEP);
    assert!(err <= TOL, "rel err {err}");
}

#[test]
fn global_average_pool() {
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let x = random_tensor(&[3, 4, 5, 3], &mut rng);
    let err = check_layer(GlobalAvgPool::new(), x, 107, STEP);
    assert!(err <= TOL, "rel err {err}");
}

#[test]
fn linear_classifier_head() {
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let mut lin = Linear::new(6, 3);
    random_init(&mut lin, &mut rng);
    let x = random_tensor(&[4, 6], &mut rng);
    let err = check_layer(lin, x, 108, STEP);
    assert!(err <= TOL, "rel err {err}");
}

#[test]
fn channel_concat_routes_gradients() {
    // concat has no parameters; verify the split of an upstream gradient
    // matches finite differences of sum(concat(a, b) * r).
    let mut rng = ChaCha12Rng::seed_from_u64(10);
    let a = RefCell::new(random_tensor(&[2, 3, 2, 2], &mut rng));
    let b = RefCell::new(random_tensor(&[2, 2, 2, 2], &mut rng));
    let r = random_tensor(&[2, 5, 2, 2], &mut rng);
    let (da, db) = channel_split(&r, 3);

    let loss = |a: &Tensor<f64>, b: &Tensor<f64>| dot(&channel_concat(a, b), &r);
    let a_len = a.borrow().len();
    let fd_a = central_difference(
        a_len,
        &mut |i| a.borrow().data()[i],
        &mut |i, v| a.borrow_mut().data_mut()[i] = v,
        &mut || loss(&a.borrow(), &b.borrow()),
        STEP,
    );
    let b_len = b.borrow().len();
    let fd_b = central_difference(
        b_len,
        &mut |i| b.borrow().data()[i],
        &mut |i, v| b.borrow_mut().data_mut()[i] = v,
        &mut || loss(&a.borrow(), &b.borrow()),
        STEP,
    );
    assert!(max_rel_err(da.data(), &fd_a) <= TOL);
    assert!(max_rel_err(db.data(), &fd_b) <= TOL);
}

#[test]
fn softmax_cross_entropy_gradient() {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let logits = RefCell::new(random_tensor(&[4, 2], &mut rng));
    let labels = [0usize, 1, 1, 0];
    let (_, analytic) = cross_entropy_with_logits(&logits.borrow(), &labels);
    let logits_len = logits.borrow().len();
    let fd = central_difference(
        logits_len,
        &mut |i| logits.borrow().data()[i],
        &mut |i, v| logits.borrow_mut().data_mut()[i] = v,
        &mut || cross_entropy_with_logits(&logits.borrow(), &labels).0,
        STEP,
    );
    let err = max_rel_err(analytic.data(), &fd);
    assert!(err <= TOL, "cross-entropy rel err {err}");
}

/// Every learnable parameter of a small end-to-end model, through dense
/// connectivity, a transition, pooling, and the softmax head.
#[test]
fn whole_model_under_cross_entropy() {
    let config = ModelConfig {
        growth_rate: 2,
        block_layers: vec![1, 1],
        stem_kernels: 4,
        compression: 0.5,
        input_rows: 16,
        input_cols: 17,
        input_channels: 2,
        class_count: 2,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(12);
    let model = RefCell::new(DenseNet::<f64>::build(config, 21).unwrap());
    let x = random_tensor(&[3, 2, 16, 17], &mut rng);
    let labels = [0usize, 1, 0];

    // Analytic gradients.
    {
        let mut m = model.borrow_mut();
        m.zero_grads();
        let logits = m.forward(&x, Mode::Train).unwrap();
        let (_, dlogits) = cross_entropy_with_logits(&logits, &labels);
        m.backward(&dlogits);
    }
    let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
    model.borrow_mut().visit_params(&mut |name, p| {
        if p.kind == ParamKind::Learnable {
            analytic.push((name.to_string(), p.grad.data().to_vec()));
        }
    });

    let loss = || {
        let mut m = model.borrow_mut();
        let logits = m.forward(&x, Mode::Train).unwrap();
        cross_entropy_with_logits(&logits, &labels).0
    };

    let mut worst: (String, f64) = (String::new(), 0.0);
    for (slot, (name, grads)) in analytic.iter().enumerate() {
        let get = |i: usize| {
            let mut out = 0.0;
            let mut cur = 0usize;
            model.borrow_mut().visit_params(&mut |_, p| {
                if p.kind == ParamKind::Learnable {
                    if cur == slot {
                        out = p.value.data()[i];
                    }
                    cur += 1;
                }
            });
            out
        };
        let set = |i: usize, v: f64| {
            let mut cur = 0usize;
            model.borrow_mut().visit_params(&mut |_, p| {
                if p.kind == ParamKind::Learnable {
                    if cur == slot {
                        p.value.data_mut()[i] = v;
                    }
                    cur += 1;
                }
            });
        };
        let fd = central_difference(
            grads.len(),
            &mut { let g = &get; move |i| g(i) },
            &mut { let s = &set; move |i, v| s(i, v) },
            &mut { let l = &loss; move || l() },
            STEP,
        );
        let err = max_rel_err(grads, &fd);
        if err > worst.1 {
            worst = (name.clone(), err);
        }
        assert!(err <= TOL, "{name} rel err {err}");
    }
    println!("worst parameter gradient: {} rel err {:.3e}", worst.0, worst.1);
}
