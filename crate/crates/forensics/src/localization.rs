//! Sliding-window tamper localization: classify every 256x256 window at
//! stride 32 and assemble probability maps. Windows stay aligned to the
//! 8x8 block grid, and features come from one coefficient decode of the
//! whole image.

use crate::features::{FeatureSpec, FeatureTensor, build_feature_in, to_batch};
use crate::metrics::{self, MetricsReport};
use crate::synthesis::WindowLabels;
use crate::{Error, Result};
use requant_codec::JpegStream;
use requant_nn::{DenseNet, Mode};
use serde::Serialize;

/// Window start offsets covering `dim`: every multiple of `stride` that
/// fits, plus one final window clamped to the edge when the dimension is
/// not window + k*stride.
pub fn window_starts(dim: usize, window: usize, stride: usize) -> Vec<usize> {
    assert!(window <= dim);
    let mut starts: Vec<usize> = (0..=dim - window).step_by(stride).collect();
    if starts.last().copied() != Some(dim - window) {
        starts.push(dim - window);
    }
    starts
}

/// Scores a batch of window features with P(double compressed).
pub trait PatchScorer {
    fn score(&mut self, features: &[FeatureTensor]) -> Result<Vec<f64>>;
}

/// Adapts a trained classifier to the scorer interface.
pub struct ModelScorer<'a> {
    model: &'a mut DenseNet<f32>,
    spec: FeatureSpec,
    batch_size: usize,
}

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a mut DenseNet<f32>, spec: FeatureSpec) -> Self {
        Self { model, spec, batch_size: 64 }
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }
}

impl PatchScorer for ModelScorer<'_> {
    fn score(&mut self, features: &[FeatureTensor]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(features.len());
        for chunk in features.chunks(self.batch_size) {
            let refs: Vec<&FeatureTensor> = chunk.iter().collect();
            let x = to_batch(&refs, self.spec.normalize);
            let probs = self.model.probabilities(&x, Mode::Eval)?;
            for i in 0..chunk.len() {
                out.push(probs.data()[i * 2 + 1] as f64);
            }
        }
        Ok(out)
    }
}

/// Per-window P(double) over the sliding grid, plus derived per-pixel and
/// binary views. Low probability marks a window as tampered, because
/// tampered regions are the single-compressed ones.
#[derive(Debug, Clone, Serialize)]
pub struct TamperMap {
    pub width: usize,
    pub height: usize,
    pub window: usize,
    pub stride: usize,
    pub starts_x: Vec<usize>,
    pub starts_y: Vec<usize>,
    /// Row-major over (starts_y, starts_x).
    pub probabilities: Vec<f64>,
    pub threshold: f64,
}

impl TamperMap {
    pub fn window_count(&self) -> usize {
        self.probabilities.len()
    }

    /// True where the window is flagged tampered: P(double) < threshold.
    pub fn decisions(&self) -> Vec<bool> {
        self.probabilities.iter().map(|&p| p < self.threshold).collect()
    }

    /// Mean window probability covering each pixel.
    pub fn per_pixel(&self) -> Vec<f32> {
        let mut sum = vec![0.0f64; self.width * self.height];
        let mut cover = vec![0u32; self.width * self.height];
        for (yi, &sy) in self.starts_y.iter().enumerate() {
            for (xi, &sx) in self.starts_x.iter().enumerate() {
                let p = self.probabilities[yi * self.starts_x.len() + xi];
                for y in sy..sy + self.window {
                    let row = y * self.width;
                    for x in sx..sx + self.window {
                        sum[row + x] += p;
                        cover[row + x] += 1;
                    }
                }
            }
        }
        sum.iter()
            .zip(cover.iter())
            .map(|(&s, &c)| if c > 0 { (s / c as f64) as f32 } else { 0.0 })
            .collect()
    }

    /// 8-bit view of the per-pixel field for heatmap output.
    pub fn heatmap_u8(&self) -> Vec<u8> {
        self.per_pixel().iter().map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8).collect()
    }
}

/// Decodes the image's coefficients once, then classifies every window.
pub fn localize(
    stream: &JpegStream,
    spec: &FeatureSpec,
    scorer: &mut dyn PatchScorer,
    window: usize,
    stride: usize,
) -> Result<TamperMap> {
    assert!(window.is_multiple_of(8) && stride.is_multiple_of(8), "window grid must stay 8x8-aligned");
    let (width, height) = stream.dimensions()?;
    if width < window || height < window {
        return Err(Error::Localization(format!(
            "image {width}x{height} smaller than the {window}x{window} window"
        )));
    }
    let grid = stream.decode_coefficients()?;
    let starts_x = window_starts(width, window, stride);
    let starts_y = window_starts(height, window, stride);
    let wb = window / 8;

    let mut features = Vec::with_capacity(starts_x.len() * starts_y.len());
    for &sy in &starts_y {
        for &sx in &starts_x {
            features.push(build_feature_in(&grid, spec, sx / 8, sy / 8, wb, wb));
        }
    }
    let probabilities = scorer.score(&features)?;
    Ok(TamperMap {
        width,
        height,
        window,
        stride,
        starts_x,
        starts_y,
        probabilities,
        threshold: 0.5,
    })
}

/// Window-level precision/recall/F against ground truth; positive =
/// tampered window.
pub fn score_localization(map: &TamperMap, truth: &WindowLabels) -> Result<MetricsReport> {
    if map.starts_x != truth.starts_x || map.starts_y != truth.starts_y {
        return Err(Error::Localization("window grids do not match".into()));
    }
    let decisions = map.decisions();
    Ok(metrics::report(metrics::confusion(&truth.tampered, &decisions)))
}
