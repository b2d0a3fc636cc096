//! The densely connected classifier: stem convolution, four dense blocks
//! joined by compressing transitions, global average pooling, and a
//! linear softmax head.

use crate::init::xavier_uniform;
use crate::layers::{
    AvgPool2d, BatchNorm2d, Conv2d, GlobalAvgPool, Layer, Linear, MaxPool2d, Mode, Param, Relu,
};
use crate::loss::softmax;
use crate::ops::{channel_concat, channel_split};
use crate::scalar::Real;
use crate::tensor::Tensor;
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Architecture hyper-parameters. The input is a (rows x cols) grid with
/// one or two channels; rows is the 64 DCT frequencies and cols the
/// histogram bin count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub growth_rate: usize,
    pub block_layers: Vec<usize>,
    pub stem_kernels: usize,
    pub compression: f64,
    pub input_rows: usize,
    pub input_cols: usize,
    pub input_channels: usize,
    pub class_count: usize,
}

impl ModelConfig {
    /// Full-size configuration: growth 32, blocks 6/12/24/16, 64 stem
    /// kernels, compression 0.5.
    pub fn full(bin_half_range: usize, input_channels: usize) -> Self {
        Self {
            growth_rate: 32,
            block_layers: vec![6, 12, 24, 16],
            stem_kernels: 64,
            compression: 0.5,
            input_rows: 64,
            input_cols: 2 * bin_half_range + 1,
            input_channels,
            class_count: 2,
        }
    }

    /// Desk-scale configuration used by the fast experiments and tests.
    pub fn toy(bin_half_range: usize, input_channels: usize) -> Self {
        Self {
            growth_rate: 8,
            block_layers: vec![2, 2, 2, 2],
            stem_kernels: 16,
            compression: 0.5,
            input_rows: 64,
            input_cols: 2 * bin_half_range + 1,
            input_channels,
            class_count: 2,
        }
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.input_channels, self.input_rows, self.input_cols]
    }
}

/// One dense layer: BN, ReLU, 1x1 conv to 4k, BN, ReLU, 3x3 conv to k;
/// its output is concatenated onto its input.
struct DenseLayer<F> {
    norm1: BatchNorm2d<F>,
    act1: Relu<F>,
    conv1: Conv2d<F>,
    norm2: BatchNorm2d<F>,
    act2: Relu<F>,
    conv2: Conv2d<F>,
    in_channels: usize,
}

impl<F: Real> DenseLayer<F> {
    fn new(in_channels: usize, growth: usize) -> Self {
        let bottleneck = 4 * growth;
        Self {
            norm1: BatchNorm2d::new(in_channels, BN_EPS, BN_MOMENTUM),
            act1: Relu::new(),
            conv1: Conv2d::new(in_channels, bottleneck, 1, 1, 0),
            norm2: BatchNorm2d::new(bottleneck, BN_EPS, BN_MOMENTUM),
            act2: Relu::new(),
            conv2: Conv2d::new(bottleneck, growth, 3, 1, 1),
            in_channels,
        }
    }
}

impl<F: Real> Layer<F> for DenseLayer<F> {
    fn forward(&mut self, x: &Tensor<F>, mode: Mode) -> Tensor<F> {
        let h = self.norm1.forward(x, mode);
        let h = self.act1.forward(&h, mode);
        let h = self.conv1.forward(&h, mode);
        let h = self.norm2.forward(&h, mode);
        let h = self.act2.forward(&h, mode);
        let new = self.conv2.forward(&h, mode);
        channel_concat(x, &new)
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Tensor<F> {
        let (mut dx, dnew) = channel_split(grad_out, self.in_channels);
        let g = self.conv2.backward(&dnew);
        let g = self.act2.backward(&g);
        let g = self.norm2.backward(&g);
        let g = self.conv1.backward(&g);
        let g = self.act1.backward(&g);
        let g = self.norm1.backward(&g);
        for (a, &b) in dx.data_mut().iter_mut().zip(g.data()) {
            *a += b;
        }
        dx
    }

    fn visit_params(&mut self, prefix: &str, visit: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.norm1.visit_params(&format!("{prefix}.norm1"), visit);
        self.conv1.visit_params(&format!("{prefix}.conv1"), visit);
        self.norm2.visit_params(&format!("{prefix}.norm2"), visit);
        self.conv2.visit_params(&format!("{prefix}.conv2"), visit);
    }
}

struct DenseBlock<F> {
    layers: Vec<DenseLayer<F>>,
}

impl<F: Real> DenseBlock<F> {
    fn new(in_channels: usize, layer_count: usize, growth: usize) -> Self {
        let layers = (0..layer_count)
            .map(|j| DenseLayer::new(in_channels + j * growth, growth))
            .collect();
        Self { layers }
    }
}

impl<F: Real> Layer<F> for DenseBlock<F> {
    fn forward(&mut self, x: &Tensor<F>, mode: Mode) -> Tensor<F> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, mode);
        }
        h
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Tensor<F> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g);
        }
        g
    }

    fn visit_params(&mut self, prefix: &str, visit: &mut dyn FnMut(&str, &mut Param<F>)) {
        for (j, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_params(&format!("{prefix}.layer{j}"), visit);
        }
    }
}

/// Transition between blocks: BN, ReLU, channel-compressing 1x1 conv,
/// 2x2 average pooling with stride 2.
struct Transition<F> {
    norm: BatchNorm2d<F>,
    act: Relu<F>,
    conv: Conv2d<F>,
    pool: AvgPool2d<F>,
}

impl<F: Real> Transition<F> {
    fn new(in_channels: usize, out_channels: usize) -> Self {
        Self {
            norm: BatchNorm2d::new(in_channels, BN_EPS, BN_MOMENTUM),
            act: Relu::new(),
            conv: Conv2d::new(in_channels, out_channels, 1, 1, 0),
            pool: AvgPool2d::new(2, 2),
        }
    }
}

impl<F: Real> Layer<F> for Transition<F> {
    fn forward(&mut self, x: &Tensor<F>, mode: Mode) -> Tensor<F> {
        let h = self.norm.forward(x, mode);
        let h = self.act.forward(&h, mode);
        let h = self.conv.forward(&h, mode);
        self.pool.forward(&h, mode)
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Tensor<F> {
        let g = self.pool.backward(grad_out);
        let g = self.conv.backward(&g);
        let g = self.act.backward(&g);
        self.norm.backward(&g)
    }

    fn visit_params(&mut self, prefix: &str, visit: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.norm.visit_params(&format!("{prefix}.norm"), visit);
        self.conv.visit_params(&format!("{prefix}.conv"), visit);
    }
}

pub struct DenseNet<F> {
    config: ModelConfig,
    stem: Conv2d<F>,
    stem_pool: MaxPool2d<F>,
    blocks: Vec<DenseBlock<F>>,
    transitions: Vec<Transition<F>>,
    gap: GlobalAvgPool<F>,
    classifier: Linear<F>,
}

impl<F: Real> DenseNet<F> {
    /// Builds the network with Xavier-uniform weights and zero biases,
    /// deterministically from `seed`. Fails if the input is too small to
    /// survive the stem and the transition poolings.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        if config.block_layers.is_empty() {
            return Err(Error::ShapeInfeasible("no dense blocks".into()));
        }
        if !(config.compression > 0.0 && config.compression <= 1.0) {
            return Err(Error::ShapeInfeasible(format!(
                "compression {} outside (0, 1]",
                config.compression
            )));
        }

        // Walk the spatial chain first so infeasible configs fail fast.
        let check = |dim: usize, kernel: usize, stride: usize, pad: usize, what: &str| {
            let eff = dim + 2 * pad;
            if eff < kernel {
                return Err(Error::ShapeInfeasible(format!("{what}: {dim} too small")));
            }
            Ok((eff - kernel) / stride + 1)
        };
        let mut h = check(config.input_rows, 7, 2, 3, "stem conv rows")?;
        let mut w = check(config.input_cols, 7, 2, 3, "stem conv cols")?;
        h = check(h, 3, 2, 1, "stem pool rows")?;
        w = check(w, 3, 2, 1, "stem pool cols")?;
        for i in 0..config.block_layers.len() - 1 {
            h = check(h, 2, 2, 0, &format!("transition {i} rows"))?;
            w = check(w, 2, 2, 0, &format!("transition {i} cols"))?;
            if h == 0 || w == 0 {
                return Err(Error::ShapeInfeasible(format!(
                    "transition {i} collapses the feature map"
                )));
            }
        }

        let k = config.growth_rate;
        let mut channels = config.stem_kernels;
        let stem = Conv2d::new(config.input_channels, channels, 7, 2, 3);
        let stem_pool = MaxPool2d::new(3, 2, 1);

        let mut blocks = Vec::new();
        let mut transitions = Vec::new();
        for (i, &layer_count) in config.block_layers.iter().enumerate() {
            blocks.push(DenseBlock::new(channels, layer_count, k));
            channels += layer_count * k;
            if i + 1 < config.block_layers.len() {
                let compressed = ((channels as f64 * config.compression).floor() as usize).max(1);
                transitions.push(Transition::new(channels, compressed));
                channels = compressed;
            }
        }
        let classifier = Linear::new(channels, config.class_count);

        let mut net = Self {
            config,
            stem,
            stem_pool,
            blocks,
            transitions,
            gap: GlobalAvgPool::new(),
            classifier,
        };
        net.initialize(seed);
        Ok(net)
    }

    /// Xavier-uniform weights, zero biases, identity batch-norm.
    fn initialize(&mut self, seed: u64) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        self.visit_params(&mut |name, p| {
            if name.ends_with(".weight") {
                let shape = p.value.shape().to_vec();
                let (fan_in, fan_out) = match shape.len() {
                    4 => (shape[1] * shape[2] * shape[3], shape[0] * shape[2] * shape[3]),
                    2 => (shape[1], shape[0]),
                    _ => unreachable!("weight rank"),
                };
                xavier_uniform(&mut p.value, fan_in, fan_out, &mut rng);
            }
        });
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<()> {
        let shape = x.shape();
        let want = self.config.input_shape();
        if shape.len() != 4 || shape[1..] != want {
            return Err(Error::ShapeMismatch {
                expected: vec![shape.first().copied().unwrap_or(0), want[0], want[1], want[2]],
                got: shape.to_vec(),
            });
        }
        Ok(())
    }

    /// Runs the network and returns logits of shape (N, class_count).
    pub fn forward(&mut self, x: &Tensor<F>, mode: Mode) -> Result<Tensor<F>> {
        self.check_input(x)?;
        let mut h = self.stem.forward(x, mode);
        h = self.stem_pool.forward(&h, mode);
        for i in 0..self.blocks.len() {
            h = self.blocks[i].forward(&h, mode);
            if i < self.transitions.len() {
                h = self.transitions[i].forward(&h, mode);
            }
        }
        let pooled = self.gap.forward(&h, mode);
        Ok(self.classifier.forward(&pooled, mode))
    }

    /// Softmax class probabilities, each row summing to 1.
    pub fn probabilities(&mut self, x: &Tensor<F>, mode: Mode) -> Result<Tensor<F>> {
        Ok(softmax(&self.forward(x, mode)?))
    }

    /// Backpropagates a logit gradient, accumulating into parameter grads.
    pub fn backward(&mut self, grad_logits: &Tensor<F>) {
        let g = self.classifier.backward(grad_logits);
        let mut g = self.gap.backward(&g);
        for i in (0..self.blocks.len()).rev() {
            if i < self.transitions.len() {
                g = self.transitions[i].backward(&g);
            }
            g = self.blocks[i].backward(&g);
        }
        let g = self.stem_pool.backward(&g);
        self.stem.backward(&g);
    }

    pub fn visit_params(&mut self, visit: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.stem.visit_params("stem", visit);
        let block_count = self.blocks.len();
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.visit_params(&format!("block{i}"), visit);
            let _ = block_count;
        }
        for (i, t) in self.transitions.iter_mut().enumerate() {
            t.visit_params(&format!("transition{i}"), visit);
        }
        self.classifier.visit_params("classifier", visit);
    }

    /// Number of learnable scalars (weights, biases, BN scale/shift).
    pub fn learnable_count(&mut self) -> usize {
        let mut count = 0;
        self.visit_params(&mut |_, p| {
            if p.kind == crate::layers::ParamKind::Learnable {
                count += p.value.len();
            }
        });
        count
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }
}
