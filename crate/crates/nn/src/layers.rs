//! Network layers. Each layer caches whatever its backward pass needs
//! during `forward`; `backward` consumes the cache, accumulates parameter
//! gradients, and returns the gradient with respect to its input.

use crate::ops::{matmul_acc, matmul_ta_acc, matmul_tb_acc};
use crate::scalar::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Whether a tensor is updated by the optimizer or only tracked
/// (batch-norm running statistics).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Learnable,
    Buffer,
}

#[derive(Debug, Clone)]
pub struct Param<F> {
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
    pub kind: ParamKind,
}

impl<F: Real> Param<F> {
    pub fn learnable(value: Tensor<F>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad, kind: ParamKind::Learnable }
    }

    pub fn buffer(value: Tensor<F>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad, kind: ParamKind::Buffer }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::ZERO);
    }
}

pub trait Layer<F: Real> {
    fn forward(&mut self, x: &Tensor<F>, mode: Mode) -> Tensor<F>;

    /// Backpropagates through the most recent `forward` call.
    fn backward(&mut self, grad_out: &Tensor<F>) -> Tensor<F>;

    /// Visits every parameter (learnable and buffer) under a dotted name.
    fn visit_params(&mut self, prefix: &str, visit: &mut dyn FnMut(&str, &mut Param<F>));
}

fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

pub struct Conv2d<F> {
    pub weight: Param<F>, // (out_c, in_c, kh, kw)
    pub bias: Param<F>,   // (out_c)
    kernel: usize,
    stride: usize,
    pad: usize,
    cached_input: Option<Tensor<F>>,
}

impl<F: Real> Conv2d<F> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            weight: Param::learnable(Tensor::zeros(&[out_channels, in_channels, kernel, kernel])),
            bias: Param::learnable(Tensor::zeros(&[out_channels])),
            kernel,
            stride,
            pad,
            cached_input: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            conv_out_dim(h, self.kernel, self.stride, self.pad),
            conv_out_dim(w, self.kernel, self.stride, self.pad),
        )
    }

    /// Gathers one sample into a (in_c*k*k, oh*ow) patch matrix.
    fn im2col(&self, sample: &[F], c: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<F> {
        let k = self.kernel;
        let mut cols = vec![F::ZERO; c * k * k * oh * ow];
        let span = oh * ow;
        for ch in 0..c {
            let plane = &sample[ch * h * w..(ch + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((ch * k + ky) * k + kx) * span;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let in_row = iy as usize * w;
                        let out_row = row + oy * ow;
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            cols[out_row + ox] = plane[in_row + ix as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    /// Scatter-adds a (in_c*k*k, oh*ow) gradient matrix back onto the input.
    fn col2im_acc(&self, cols: &[F], c: usize, h: usize, w: usize, oh: usize, ow: usize, out: &mut [F]) {
        let k = self.kernel;
        let span = oh * ow;
        for ch in 0..c {
            let plane_base = ch * h * w;
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((ch * k + ky) * k + kx) * span;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let in_row = plane_base + iy as usize * w;
                        let out_row = row + oy * ow;
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            out[in_row + ix as usize] += cols[out_row + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<F: Real> Layer<F> for Conv2d<F> {
    fn forward(&mut self, x: &Tensor<F>, _mode: Mode) -> Tensor<F> {
        let (n, c, h, w) = x.dims4();
        assert_eq!(c, self.in_channels(), "conv input channels");
        let (oh, ow) = self.output_size(h, w);
        let oc = self.out_channels();
        let span = oh * ow;
        let krows = c * self.kernel * self.kernel;

        let mut y = Tensor::zeros(&[n, oc, oh, ow]);
        for i in 0..n {
            let cols = self.im2col(x.sample(i), c, h, w, oh, ow);
            let out = y.sample_mut(i);
            matmul_acc(self.weight.value.data(), oc, krows, &cols, span, out);
            for ch in 0..oc {
                let b = self.bias.value.data()[ch];
                for v in &mut out[ch * span..(ch + 1) * span] {
                    *v += b;
                }
            }
        }
        self.cached_input = Some(x.clone());
        y
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Tensor<F> {
        let x = self.cached_input.take().expect("conv backward before forward");
        let (n, c, h, w) = x.dims4();
        let (nb, oc, oh, ow) = grad_out.dims4();
        assert_eq!(n, nb);
        let span = oh * ow;
        let krows = c * self.kernel * self.kernel;

        let mut dx = Tensor::zeros(&[n, c, h, w]);
        let mut dcols = vec![F::ZERO; krows * span];
        for i in 0..n {
            let dy = grad_out.sample(i);
            // dW += dY * cols^T
            let cols = self.im2col(x.sample(i), c, h, w, oh, ow);
            matmul_tb_acc(dy, oc, span, &cols, krows, self.weight.grad.data_mut());
            // db += row sums of dY
            for ch in 0..oc {
                let mut acc = F::ZERO;
                for &v in &dy[ch * span..(ch + 1) * span] {
                    acc += v;
                }
                self.bias.grad.data_mut()[ch] += acc;
            }
            // dX = col2im(W^T * dY)
            dcols.fill(F::ZERO);
            matmul_ta_acc(self.weight.value.data(), oc, krows, dy, span, &mut dcols);
            self.col2im_acc(&dcols, c, h, w, oh, ow, dx.sample_mut(i));
        }
        dx
    }

    fn visit_params(&mut self, prefix: &str, visit: &mut dyn FnMut(&str, &mut Param<F>)) {
        visit(&format!("{prefix}.weight"), &mut self.weight);
        visit(&format!("{prefix}.bias"), &mut self.bias);
    }
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

struct BnCache<F> {
    xhat: Tensor<F>,
    inv_std: Vec<F>,
}

pub struct BatchNorm2d<F> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub running_mean: Param<F>,
    pub running_var: Param<F>,
    eps: F,
    momentum: F,
    cache: Option<BnCache<F>>,
}

impl<F: Real> BatchNorm2d<F> {
    pub fn new(channels: usize, eps: f64, momentum: f64) -> Self {
        let mut gamma = Tensor::zeros(&[channels]);
        gamma.fill(F::ONE);
        let mut running_var = Tensor::zeros(&[channels]);
        running_var.fill(F::ONE);
        Self {
            gamma: Param::learnable(gamma),
            beta: Param::learnable(Tensor::zeros(&[channels])),
            running_mean: Param::buffer(Tensor::zeros(&[channels])),
            running_var: Param::buffer(running_var),
            eps: F::from_f64(eps),
            momentum: F::from_f64(momentum),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }
}

impl<F: Real> Layer<F> for BatchNorm2d<F> {
    fn forward(&mut self, x: &Tensor<F>, mode: Mode) -> Tensor<F> {
        let (n, c, h, w) = x.dims4();
        assert_eq!(c, self.channels(), "batchnorm channels");
        let plane = h * w;
        let count = F::from_f64((n * plane) as f64);
        let mut y = Tensor::zeros(&[n, c, h, w]);

        match mode {
            Mode::Train => {
                let mut xhat = Tensor::zeros(&[n, c, h, w]);
                let mut inv_std = vec![F::ZERO; c];
                for ch in 0..c {
                    let mut mean = F::ZERO;
                    for i in 0..n {
                        let s = &x.sample(i)[ch * plane..(ch + 1) * plane];
                        for &v in s {
                            mean += v;
                        }
                    }
                    mean = mean / count;
                    let mut var = F::ZERO;
                    for i in 0..n {
                        let s = &x.sample(i)[ch * plane..(ch + 1) * plane];
                        for &v in s {
                            let d = v - mean;
                            var += d * d;
                        }
                    }
                    var = var / count;
                    let istd = F::ONE / (var + self.eps).sqrt();
                    inv_std[ch] = istd;

                    let g = self.gamma.value.data()[ch];
                    let b = self.beta.value.data()[ch];
                    for i in 0..n {
                        let src = &x.sample(i)[ch * plane..(ch + 1) * plane];
                        let xh = &mut xhat.sample_mut(i)[ch * plane..(ch + 1) * plane];
                        for (o, &v) in xh.iter_mut().zip(src.iter()) {
                            *o = (v - mean) * istd;
                        }
                    }
                    for i in 0..n {
                        let xh = &xhat.sample(i)[ch * plane..(ch + 1) * plane];
                        let dst = &mut y.sample_mut(i)[ch * plane..(ch + 1) * plane];
                        for (o, &v) in dst.iter_mut().zip(xh.iter()) {
                            *o = g * v + b;
                        }
                    }

                    let m = self.momentum;
                    let rm = &mut self.running_mean.value.data_mut()[ch];
                    *rm = m * *rm + (F::ONE - m) * mean;
                    let rv = &mut self.running_var.value.data_mut()[ch];
                    *rv = m * *rv + (F::ONE - m) * var;
                }
                self.cache = Some(BnCache { xhat, inv_std });
            }
            Mode::Eval => {
                for ch in 0..c {
                    let mean = self.running_mean.value.data()[ch];
                    let var = self.running_var.value.data()[ch];
                    let istd = F::ONE / (var + self.eps).sqrt();
                    let g = self.gamma.value.data()[ch];
                    let b = self.beta.value.data()[ch];
                    for i in 0..n {
                        let src = &x.sample(i)[ch * plane..(ch + 1) * plane];
                        let dst = &mut y.sample_mut(i)[ch * plane..(ch + 1) * plane];
                        for (o, &v) in dst.iter_mut().zip(src.iter()) {
                            *o = g * (v - mean) * istd + b;
                        }
                    }
                }
                self.cache = None;
            }
        }
        y
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Tensor<F> {
        let cache = self.cache.take().expect("batchnorm backward requires train-mode forward");
        let (n, c, h, w) = grad_out.dims4();
        let plane = h * w;
        let count = F::from_f64((n * plane) as f64);
        let mut dx = Tensor::zeros(&[n, c, h, w]);

        for ch in 0..c {
            let mut sum_dy = F::ZERO;
            let mut sum_dy_xhat = F::ZERO;
            for i in 0..n {
                let dy = &grad_out.sample(i)[ch * plane..(ch + 1) * plane];
                let xh = &cache.xhat.sample(i)[ch * plane..(ch + 1) * plane];
                for (&d, &x) in dy.iter().zip(xh.iter()) {
                    sum_dy += d;
                    sum_dy_xhat += d * x;
                }
            }
            self.beta.grad.data_mut()[ch] += sum_dy;
            self.gamma.grad.data_mut()[ch] += sum_dy_xhat;

            let g = self.gamma.value.data()[ch];
            let istd = cache.inv_std[ch];
            let scale = g * istd / count;
            for i in 0..n {
                let dy = &grad_out.sample(i)[ch * plane..(ch + 1) * plane];
                let xh = &cache.xhat.sample(i)[ch * plane..(ch + 1) * plane];
                let dst = &mut dx.sample_mut(i)[ch * plane..(ch + 1) * plane];
                for ((o, &d), &x) in dst.iter_mut().zip(dy.iter()).zip(xh.iter()) {
                    *o = scale * (count * d - sum_dy - x * sum_dy_xhat);
                }
            }
        }
        dx
    }

    fn visit_params(&mut self, prefix: &str, visit: &mut dyn FnMut(&str, &mut Param<F>)) {
        visit(&format!("{prefix}.gamma"), &mut self.gamma);
        visit(&format!("{prefix}.beta"), &mut self.beta);
        visit(&format!("{prefix}.running_mean"), &mut self.running_mean);
        visit(&format!("{prefix}.running_var"), &mut self.running_var);
    }
}

// ---------------------------------------------------------------------------
// Activations and pooling
// ---------------------------------------------------------------------------

#[derive(Default)]
pub struct Relu<F> {
    mask: Vec<bool>,
    _marker: std::marker::PhantomData<F>,
}

impl<F: Real> Relu<F> {
    pub fn new() -> Self {
        Self { mask: Vec::new(), _marker: std::marker::PhantomData }
    }
}

impl<F: Real> Layer<F> for Relu<F> {
    fn forward(&mut self, x: &Tensor<F>, _mode: Mode) -> Tensor<F> {
        let mut y = x.clone();
        self.mask.clear();
        self.mask.reserve(x.len());
        for v in y.data_mut() {
            let active = *v > F::ZERO;
            self.mask.push(active);
            if !active {
                *v = F::ZERO;
            }
        }
        y
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Tensor<F> {
        assert_eq!(grad_out.len(), self.mask.len(), "relu backward before forward");
        let mut dx = grad_out.clone();
        for (v, &keep) in dx.data_mut().iter_mut().zip(self.mask.iter()) {
            if !keep {
                *v = F::ZERO;
            }
        }
        dx
    }

    fn visit_params(&mut self, _prefix: &str, _visit: &mut dyn FnMut(&str, &mut Param<F>)) {}
}

pub struct MaxPool2d<F> {
    kernel: usize,
    stride: usize,
    pad: usize,
    argmax: Vec<usize>,
    in_shape: Vec<usize>,
    _marker: std::marker::PhantomData<F>,
}

impl<F: Real> MaxPool2d<F> {
    pub fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            kernel,
            stride,
            pad,
            argmax: Vec::new(),
            in_shape: Vec::new(),
            _marker: std::marker::PhantomData,
        }
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            conv_out_dim(h, self.kernel, self.stride, self.pad),
            conv_out_dim(w, self.kernel, self.stride, self.pad),
        )
    }
}

impl<F: Real> Layer<F> for MaxPool2d<F> {
    fn forward(&mut self, x: &Tensor<F>, _mode: Mode) -> Tensor<F> {
        let (n, c, h, w) = x.dims4();
        let (oh, ow) = self.output_size(h, w);
        let mut y = Tensor::zeros(&[n, c, oh, ow]);
        self.argmax.clear();
        self.argmax.reserve(n * c * oh * ow);
        self.in_shape = x.shape().to_vec();

        for i in 0..n {
            let src = x.sample(i);
            let dst = y.sample_mut(i);
            for ch in 0..c {
                let plane = &src[ch * h * w..(ch + 1) * h * w];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best: Option<(usize, F)> = None;
                        for ky in 0..self.kernel {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..self.kernel {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let idx = iy as usize * w + ix as usize;
                                let v = plane[idx];
                                if best.is_none_or(|(_, bv)| v > bv) {
                                    best = Some((idx, v));
                                }
                            }
                        }
                        let (idx, v) = best.expect("pool window never empty");
                        dst[ch * oh * ow + oy * ow + ox] = v;
                        self.argmax.push(ch * h * w + idx);
                    }
                }
            }
        }
        y
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Tensor<F> {
        let (n, c, oh, ow) = grad_out.dims4();
        let mut dx = Tensor::<F>::zeros(&self.in_shape);
        let per_sample = c * oh * ow;
        for i in 0..n {
            let dy = grad_out.sample(i);
            let dst = dx.sample_mut(i);
            for (j, &g) in dy.iter().enumerate() {
                dst[self.argmax[i * per_sample + j]] += g;
            }
        }
        dx
    }

    fn visit_params(&mut self, _prefix: &str, _visit: &mut dyn FnMut(&str, &mut Param<F>)) {}
}

pub struct AvgPool2d<F> {
    kernel: usize,
    stride: usize,
    in_shape: Vec<usize>,
    _marker: std::marker::PhantomData<F>,
}

impl<F: Real> AvgPool2d<F> {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self { kernel, stride, in_shape: Vec::new(), _marker: std::marker::PhantomData }
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            conv_out_dim(h, self.kernel, self.stride, 0),
            conv_out_dim(w, self.kernel, self.stride, 0),
        )
    }
}

impl<F: Real> Layer<F> for AvgPool2d<F> {
    fn forward(&mut self, x: &Tensor<F>, _mode: Mode) -> Tensor<F> {
        let (n, c, h, w) = x.dims4();
        let (oh, ow) = self.output_size(h, w);
        let norm = F::from_f64(1.0 / (self.kernel * self.kernel) as f64);
        let mut y = Tensor::zeros(&[n, c, oh, ow]);
        self.in_shape = x.shape().to_vec();
        for i in 0..n {
            let src = x.sample(i);
            let dst = y.sample_mut(i);
            for ch in 0..c {
                let plane = &src[ch * h * w..(ch + 1) * h * w];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = F::ZERO;
                        for ky in 0..self.kernel {
                            let iy = oy * self.stride + ky;
                            for kx in 0..self.kernel {
                                acc += plane[iy * w + ox * self.stride + kx];
                            }
                        }
                        dst[ch * oh * ow + oy * ow + ox] = acc * norm;
                    }
                }
            }
        }
        y
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Tensor<F> {
        let (n, c, oh, ow) = grad_out.dims4();
        let h = self.in_shape[2];
        let w = self.in_shape[3];
        let norm = F::from_f64(1.0 / (self.kernel * self.kernel) as f64);
        let mut dx = Tensor::<F>::zeros(&self.in_shape);
        for i in 0..n {
            let dy = grad_out.sample(i);
            let dst = dx.sample_mut(i);
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = dy[ch * oh * ow + oy * ow + ox] * norm;
                        for ky in 0..self.kernel {
                            let iy = oy * self.stride + ky;
                            for kx in 0..self.kernel {
                                dst[ch * h * w + iy * w + ox * self.stride + kx] += g;
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn visit_params(&mut self, _prefix: &str, _visit: &mut dyn FnMut(&str, &mut Param<F>)) {}
}

/// Averages each channel over its full spatial extent: (N,C,H,W) -> (N,C).
pub struct GlobalAvgPool<F> {
    in_shape: Vec<usize>,
    _marker: std::marker::PhantomData<F>,
}

impl<F: Real> GlobalAvgPool<F> {
    pub fn new() -> Self {
        Self { in_shape: Vec::new(), _marker: std::marker::PhantomData }
    }
}

impl<F: Real> Default for GlobalAvgPool<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Layer<F> for GlobalAvgPool<F> {
    fn forward(&mut self, x: &Tensor<F>, _mode: Mode) -> Tensor<F> {
        let (n, c, h, w) = x.dims4();
        let norm = F::from_f64(1.0 / (h * w) as f64);
        let mut y = Tensor::zeros(&[n, c]);
        self.in_shape = x.shape().to_vec();
        for i in 0..n {
            let src = x.sample(i);
            for ch in 0..c {
                let mut acc = F::ZERO;
                for &v in &src[ch * h * w..(ch + 1) * h * w] {
                    acc += v;
                }
                y.data_mut()[i * c + ch] = acc * norm;
            }
        }
        y
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Tensor<F> {
        let (n, c) = grad_out.dims2();
        let h = self.in_shape[2];
        let w = self.in_shape[3];
        let norm = F::from_f64(1.0 / (h * w) as f64);
        let mut dx = Tensor::<F>::zeros(&self.in_shape);
        for i in 0..n {
            let dst = dx.sample_mut(i);
            for ch in 0..c {
                let g = grad_out.data()[i * c + ch] * norm;
                for v in &mut dst[ch * h * w..(ch + 1) * h * w] {
                    *v = g;
                }
            }
        }
        dx
    }

    fn visit_params(&mut self, _prefix: &str, _visit: &mut dyn FnMut(&str, &mut Param<F>)) {}
}

// ---------------------------------------------------------------------------
// Fully connected
// ---------------------------------------------------------------------------

pub struct Linear<F> {
    pub weight: Param<F>, // (out, in)
    pub bias: Param<F>,   // (out)
    cached_input: Option<Tensor<F>>,
}

impl<F: Real> Linear<F> {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Self {
            weight: Param::learnable(Tensor::zeros(&[out_features, in_features])),
            bias: Param::learnable(Tensor::zeros(&[out_features])),
            cached_input: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape()[0]
    }
}

impl<F: Real> Layer<F> for Linear<F> {
    fn forward(&mut self, x: &Tensor<F>, _mode: Mode) -> Tensor<F> {
        let (n, features) = x.dims2();
        assert_eq!(features, self.in_features(), "linear input features");
        let out = self.out_features();
        let mut y = Tensor::zeros(&[n, out]);
        matmul_tb_acc(x.data(), n, features, self.weight.value.data(), out, y.data_mut());
        for i in 0..n {
            for (j, &b) in self.bias.value.data().iter().enumerate() {
                y.data_mut()[i * out + j] += b;
            }
        }
        self.cached_input = Some(x.clone());
        y
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Tensor<F> {
        let x = self.cached_input.take().expect("linear backward before forward");
        let (n, features) = x.dims2();
        let out = self.out_features();

        // dW += dY^T * X, db += column sums of dY
        matmul_ta_acc(grad_out.data(), n, out, x.data(), features, self.weight.grad.data_mut());
        for i in 0..n {
            for j in 0..out {
                self.bias.grad.data_mut()[j] += grad_out.data()[i * out + j];
            }
        }
        // dX = dY * W
        let mut dx = Tensor::zeros(&[n, features]);
        matmul_acc(grad_out.data(), n, out, self.weight.value.data(), features, dx.data_mut());
        dx
    }

    fn visit_params(&mut self, prefix: &str, visit: &mut dyn FnMut(&str, &mut Param<F>)) {
        visit(&format!("{prefix}.weight"), &mut self.weight);
        visit(&format!("{prefix}.bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_identity_kernel() {
        let mut conv = Conv2d::<f64>::new(1, 1, 1, 1, 0);
        conv.weight.value.data_mut()[0] = 1.0;
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let y = conv.forward(&x, Mode::Train);
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_output_geometry() {
        let conv = Conv2d::<f32>::new(2, 4, 7, 2, 3);
        assert_eq!(conv.output_size(64, 201), (32, 101));
        assert_eq!(conv.output_size(64, 41), (32, 21));
    }

    #[test]
    fn maxpool_selects_maximum_and_routes_gradient() {
        let mut pool = MaxPool2d::<f64>::new(2, 2, 0);
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 5.0, 3.0, 2.0]);
        let y = pool.forward(&x, Mode::Train);
        assert_eq!(y.data(), &[5.0]);
        let dx = pool.backward(&Tensor::from_vec(&[1, 1, 1, 1], vec![2.0]));
        assert_eq!(dx.data(), &[0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn avgpool_means_and_spreads() {
        let mut pool = AvgPool2d::<f64>::new(2, 2);
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 6.0]);
        let y = pool.forward(&x, Mode::Train);
        assert_eq!(y.data(), &[3.0]);
        let dx = pool.backward(&Tensor::from_vec(&[1, 1, 1, 1], vec![4.0]));
        assert_eq!(dx.data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn global_pool_is_channel_mean() {
        let mut gap = GlobalAvgPool::<f64>::new();
        let x = Tensor::from_vec(&[1, 2, 1, 2], vec![1.0, 3.0, 10.0, 20.0]);
        let y = gap.forward(&x, Mode::Eval);
        assert_eq!(y.shape(), &[1, 2]);
        assert_eq!(y.data(), &[2.0, 15.0]);
    }

    #[test]
    fn relu_masks_negative() {
        let mut relu = Relu::<f64>::new();
        let x = Tensor::from_vec(&[1, 1, 1, 3], vec![-1.0, 0.5, 2.0]);
        let y = relu.forward(&x, Mode::Train);
        assert_eq!(y.data(), &[0.0, 0.5, 2.0]);
        let dx = relu.backward(&Tensor::from_vec(&[1, 1, 1, 3], vec![1.0, 1.0, 1.0]));
        assert_eq!(dx.data(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn batchnorm_train_normalizes_batch() {
        let mut bn = BatchNorm2d::<f64>::new(1, 1e-5, 0.9);
        let x = Tensor::from_vec(&[2, 1, 1, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let y = bn.forward(&x, Mode::Train);
        let mean: f64 = y.data().iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        // running stats moved toward batch stats
        assert!((bn.running_mean.value.data()[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_eval_uses_running_stats() {
        let mut bn = BatchNorm2d::<f64>::new(1, 0.0, 0.9);
        bn.running_mean.value.data_mut()[0] = 1.0;
        bn.running_var.value.data_mut()[0] = 4.0;
        let x = Tensor::from_vec(&[1, 1, 1, 2], vec![3.0, 5.0]);
        let y = bn.forward(&x, Mode::Eval);
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn linear_affine_map() {
        let mut lin = Linear::<f64>::new(2, 1);
        lin.weight.value.data_mut().copy_from_slice(&[2.0, -1.0]);
        lin.bias.value.data_mut()[0] = 0.5;
        let x = Tensor::from_vec(&[1, 2], vec![3.0, 4.0]);
        let y = lin.forward(&x, Mode::Eval);
        assert_eq!(y.data(), &[2.5]);
    }
}
