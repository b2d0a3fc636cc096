//! Classifier input construction: per-frequency histograms of quantized
//! DCT coefficients, channel-concatenated with the row-repeated
//! quantization steps from the stream header.

use crate::{Error, Result};
use requant_codec::{QMatrix, QuantizedBlockGrid};
use requant_nn::Tensor;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const FREQUENCIES: usize = 64;
const DUMP_MAGIC: &[u8; 4] = b"DQF1";

/// How features are built. `bin_half_range` is the histogram parameter b:
/// integer bins cover [-b, b]. `normalize` divides histogram counts by the
/// patch's block count when converting to a training batch; the raw
/// feature tensor always holds plain counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub bin_half_range: usize,
    pub with_qfactors: bool,
    pub normalize: bool,
}

impl FeatureSpec {
    pub fn new(bin_half_range: usize) -> Self {
        Self { bin_half_range, with_qfactors: true, normalize: false }
    }

    pub fn without_qfactors(mut self) -> Self {
        self.with_qfactors = false;
        self
    }

    pub fn cols(&self) -> usize {
        2 * self.bin_half_range + 1
    }

    pub fn channels(&self) -> usize {
        if self.with_qfactors { 2 } else { 1 }
    }
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self::new(100)
    }
}

/// 64 histogram rows, one per frequency in row-major (u,v) order; row r
/// has 2b+1 bins counting blocks whose coefficient at that frequency
/// equals the bin value. Out-of-range coefficients saturate into the
/// edge bins, so every row sums to the block count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramSet {
    bin_half_range: usize,
    block_count: usize,
    counts: Vec<u32>, // 64 x (2b+1)
}

impl HistogramSet {
    pub fn bin_half_range(&self) -> usize {
        self.bin_half_range
    }

    pub fn cols(&self) -> usize {
        2 * self.bin_half_range + 1
    }

    pub fn block_count(&self) -> usize {
        self.block_count
    }

    pub fn row(&self, frequency: usize) -> &[u32] {
        let cols = self.cols();
        &self.counts[frequency * cols..(frequency + 1) * cols]
    }

    /// Count at signed bin `i` for a frequency, i in [-b, b].
    pub fn count(&self, frequency: usize, bin: i32) -> u32 {
        let b = self.bin_half_range as i32;
        assert!((-b..=b).contains(&bin));
        self.row(frequency)[(bin + b) as usize]
    }
}

/// Histograms over every block of the grid.
pub fn build_histograms(grid: &QuantizedBlockGrid, bin_half_range: usize) -> HistogramSet {
    build_histograms_in(grid, bin_half_range, 0, 0, grid.blocks_x(), grid.blocks_y())
}

/// Histograms over a block-aligned window of the grid.
pub fn build_histograms_in(
    grid: &QuantizedBlockGrid,
    bin_half_range: usize,
    bx0: usize,
    by0: usize,
    blocks_x: usize,
    blocks_y: usize,
) -> HistogramSet {
    assert!(bin_half_range >= 1, "bin half-range must be at least 1");
    assert!(bx0 + blocks_x <= grid.blocks_x() && by0 + blocks_y <= grid.blocks_y());
    let b = bin_half_range as i32;
    let cols = 2 * bin_half_range + 1;
    let mut counts = vec![0u32; FREQUENCIES * cols];
    for by in by0..by0 + blocks_y {
        for bx in bx0..bx0 + blocks_x {
            let block = grid.block(bx, by);
            for (freq, &value) in block.iter().enumerate() {
                let bin = (value.clamp(-b, b) + b) as usize;
                counts[freq * cols + bin] += 1;
            }
        }
    }
    HistogramSet { bin_half_range, block_count: blocks_x * blocks_y, counts }
}

/// The 64 x (2b+1) matrix repeating each frequency's quantization step
/// across its histogram row.
pub fn build_qprime(q: &QMatrix, bin_half_range: usize) -> Vec<i32> {
    let cols = 2 * bin_half_range + 1;
    let mut out = Vec::with_capacity(FREQUENCIES * cols);
    for freq in 0..FREQUENCIES {
        let step = q.steps()[freq] as i32;
        out.extend(std::iter::repeat_n(step, cols));
    }
    out
}

/// The network input: histogram counts in channel 0, repeated q-factors
/// in channel 1 (omitted when the spec disables them). Stored
/// channel-major, row-major within a channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureTensor {
    rows: usize,
    cols: usize,
    channels: usize,
    values: Vec<i32>,
}

impl FeatureTensor {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[i32] {
        let plane = self.rows * self.cols;
        &self.values[c * plane..(c + 1) * plane]
    }

    pub fn at(&self, c: usize, row: usize, col: usize) -> i32 {
        self.values[(c * self.rows + row) * self.cols + col]
    }
}

/// Builds the feature tensor for a whole patch grid.
pub fn build_feature(grid: &QuantizedBlockGrid, spec: &FeatureSpec) -> FeatureTensor {
    build_feature_in(grid, spec, 0, 0, grid.blocks_x(), grid.blocks_y())
}

/// Builds the feature tensor for a block-aligned window of the grid.
pub fn build_feature_in(
    grid: &QuantizedBlockGrid,
    spec: &FeatureSpec,
    bx0: usize,
    by0: usize,
    blocks_x: usize,
    blocks_y: usize,
) -> FeatureTensor {
    let hist = build_histograms_in(grid, spec.bin_half_range, bx0, by0, blocks_x, blocks_y);
    let cols = spec.cols();
    let mut values = Vec::with_capacity(FREQUENCIES * cols * spec.channels());
    values.extend(hist.counts.iter().map(|&c| c as i32));
    if spec.with_qfactors {
        values.extend(build_qprime(grid.qmatrix(), spec.bin_half_range));
    }
    FeatureTensor { rows: FREQUENCIES, cols, channels: spec.channels(), values }
}

/// Stacks feature tensors into an (N, C, 64, cols) training batch.
/// With `normalize` set, histogram counts are scaled by 1/blockCount;
/// q-factor values are passed through unchanged.
pub fn to_batch(features: &[&FeatureTensor], normalize: bool) -> Tensor<f32> {
    assert!(!features.is_empty());
    let (rows, cols, channels) = (features[0].rows, features[0].cols, features[0].channels);
    let plane = rows * cols;
    let mut out = Tensor::zeros(&[features.len(), channels, rows, cols]);
    for (i, feat) in features.iter().enumerate() {
        assert_eq!(
            (feat.rows, feat.cols, feat.channels),
            (rows, cols, channels),
            "inconsistent feature shapes in batch"
        );
        let dst = out.sample_mut(i);
        let scale = if normalize {
            // every row sums to the block count; row 0 is as good as any
            let blocks: i64 = feat.channel(0)[..cols].iter().map(|&v| v as i64).sum();
            1.0 / blocks.max(1) as f32
        } else {
            1.0
        };
        for (j, &v) in feat.channel(0).iter().enumerate() {
            dst[j] = v as f32 * scale;
        }
        if channels == 2 {
            for (j, &v) in feat.channel(1).iter().enumerate() {
                dst[plane + j] = v as f32;
            }
        }
    }
    out
}

/// Writes the flat binary dump: magic, rows, cols, channels (u32 LE),
/// then the values as 32-bit little-endian integers, channel-major.
pub fn write_feature(path: impl AsRef<Path>, feat: &FeatureTensor) -> Result<()> {
    let mut out = Vec::with_capacity(16 + feat.values.len() * 4);
    out.extend_from_slice(DUMP_MAGIC);
    for dim in [feat.rows, feat.cols, feat.channels] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in &feat.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_feature(path: impl AsRef<Path>) -> Result<FeatureTensor> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[0..4] != DUMP_MAGIC {
        return Err(Error::Format("feature dump: bad magic".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (rows, cols, channels) = (dim(4), dim(8), dim(12));
    let expected = rows * cols * channels;
    if bytes.len() != 16 + expected * 4 {
        return Err(Error::Format(format!(
            "feature dump: expected {expected} values, file holds {} bytes of data",
            bytes.len() - 16
        )));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FeatureTensor { rows, cols, channels, values })
}
