//! Labeled dataset synthesis: procedurally generated luma sources,
//! single/double compressed patches, and full forged images (copy-move
//! or blur) with block-level ground truth.

use crate::localization::window_starts;
use crate::pgm;
use crate::{Error, Result};
use rand::{Rng, RngExt};
use requant_codec::encoder::encode;
use requant_codec::{JpegStream, PixelPatch, QMatrixPool};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Compression history of a patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Single,
    Double,
}

impl Label {
    /// Class index used by the classifier; double compressed is the
    /// positive class.
    pub fn class_index(self) -> usize {
        match self {
            Label::Single => 0,
            Label::Double => 1,
        }
    }
}

/// A synthesized patch with its provenance.
#[derive(Debug, Clone)]
pub struct LabeledPatch {
    pub stream: JpegStream,
    pub label: Label,
    pub source_id: u64,
    /// Q-matrix id of the first compression; only double patches have one.
    pub q_first: Option<String>,
    /// Q-matrix id embedded in the final stream.
    pub q_final: String,
}

// ---------------------------------------------------------------------------
// Procedural sources
// ---------------------------------------------------------------------------

/// An uncompressed luma image with smooth gradients, band-limited texture,
/// and a few soft-edged shapes; stands in for camera sources when no TIFF
/// corpus is available.
pub fn procedural_patch(width: usize, height: usize, rng: &mut impl Rng) -> PixelPatch {
    let mut field = vec![0.0f32; width * height];

    // base brightness plus a tilted plane
    let base: f32 = rng.random_range(70.0..190.0);
    let gx: f32 = rng.random_range(-0.3..0.3);
    let gy: f32 = rng.random_range(-0.3..0.3);
    for y in 0..height {
        for x in 0..width {
            field[y * width + x] = base + gx * x as f32 + gy * y as f32;
        }
    }

    // value noise octaves: coarse to fine
    for (cell, amp) in [(32usize, 26.0f32), (16, 16.0), (8, 10.0), (4, 6.0)] {
        let nx = width.div_ceil(cell) + 2;
        let ny = height.div_ceil(cell) + 2;
        let lattice: Vec<f32> = (0..nx * ny).map(|_| rng.random_range(-1.0..1.0)).collect();
        for y in 0..height {
            let fy = y as f32 / cell as f32;
            let y0 = fy as usize;
            let ty = fy - y0 as f32;
            for x in 0..width {
                let fx = x as f32 / cell as f32;
                let x0 = fx as usize;
                let tx = fx - x0 as f32;
                let v00 = lattice[y0 * nx + x0];
                let v01 = lattice[y0 * nx + x0 + 1];
                let v10 = lattice[(y0 + 1) * nx + x0];
                let v11 = lattice[(y0 + 1) * nx + x0 + 1];
                let top = v00 + (v01 - v00) * tx;
                let bot = v10 + (v11 - v10) * tx;
                field[y * width + x] += amp * (top + (bot - top) * ty);
            }
        }
    }

    // a few soft-edged rectangles and discs
    let shapes = rng.random_range(1..=4);
    for _ in 0..shapes {
        let delta: f32 = rng.random_range(15.0..60.0) * if rng.random() { 1.0 } else { -1.0 };
        let cx = rng.random_range(0..width) as f32;
        let cy = rng.random_range(0..height) as f32;
        if rng.random() {
            let r_max = (width.min(height) as f32 / 2.5).max(7.0);
            let r = rng.random_range(6.0..r_max);
            for y in 0..height {
                for x in 0..width {
                    let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
                    // 2px feathered edge
                    let t = ((r - d) / 2.0).clamp(0.0, 1.0);
                    field[y * width + x] += delta * t;
                }
            }
        } else {
            let hw = rng.random_range(4.0..(width as f32 / 3.0).max(5.0));
            let hh = rng.random_range(4.0..(height as f32 / 3.0).max(5.0));
            for y in 0..height {
                for x in 0..width {
                    let dx = (x as f32 - cx).abs();
                    let dy = (y as f32 - cy).abs();
                    let t = ((hw - dx) / 2.0).clamp(0.0, 1.0) * ((hh - dy) / 2.0).clamp(0.0, 1.0);
                    field[y * width + x] += delta * t;
                }
            }
        }
    }

    let samples = field.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
    PixelPatch::new(width, height, samples).expect("procedural dimensions")
}

// ---------------------------------------------------------------------------
// Patch synthesis
// ---------------------------------------------------------------------------

/// Compresses an uncompressed source once with a matrix drawn from `pool`.
pub fn make_single_patch(
    source_id: u64,
    src: &PixelPatch,
    pool: &QMatrixPool,
    rng: &mut impl Rng,
) -> LabeledPatch {
    let entry = pool.choose(rng);
    LabeledPatch {
        stream: encode(src, &entry.matrix),
        label: Label::Single,
        source_id,
        q_first: None,
        q_final: entry.id.clone(),
    }
}

/// Compresses, decompresses, and re-compresses with a different matrix.
/// The first matrix comes from `first_pool`, the second from `final_pool`;
/// the second is re-drawn until its steps differ from the first.
pub fn make_double_patch_between(
    source_id: u64,
    src: &PixelPatch,
    first_pool: &QMatrixPool,
    final_pool: &QMatrixPool,
    rng: &mut impl Rng,
) -> Result<LabeledPatch> {
    let q1 = first_pool.choose(rng);
    if !final_pool.entries().iter().any(|e| e.matrix != q1.matrix) {
        return Err(Error::Synthesis(
            "final pool holds no matrix distinct from the first compression".into(),
        ));
    }
    let q2 = loop {
        let candidate = final_pool.choose(rng);
        if candidate.matrix != q1.matrix {
            break candidate;
        }
    };
    let stream = encode(src, &q1.matrix).recompress(&q2.matrix)?;
    Ok(LabeledPatch {
        stream,
        label: Label::Double,
        source_id,
        q_first: Some(q1.id.clone()),
        q_final: q2.id.clone(),
    })
}

/// Double compression with both matrices drawn from the same pool.
pub fn make_double_patch(
    source_id: u64,
    src: &PixelPatch,
    pool: &QMatrixPool,
    rng: &mut impl Rng,
) -> Result<LabeledPatch> {
    make_double_patch_between(source_id, src, pool, pool, rng)
}

// ---------------------------------------------------------------------------
// Forgery synthesis
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForgeryKind {
    CopyMove,
    Blur,
}

/// Ground truth at 8x8-block resolution; true = tampered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMask {
    blocks_x: usize,
    blocks_y: usize,
    tampered: Vec<bool>,
}

impl BlockMask {
    fn from_rect(width: usize, height: usize, rect: (usize, usize, usize, usize)) -> Self {
        let (rx, ry, rw, rh) = rect;
        let blocks_x = width / 8;
        let blocks_y = height / 8;
        let mut tampered = vec![false; blocks_x * blocks_y];
        for by in 0..blocks_y {
            for bx in 0..blocks_x {
                let x0 = bx * 8;
                let y0 = by * 8;
                // tampered as soon as a single pixel of the block is touched
                let hit = x0 < rx + rw && x0 + 8 > rx && y0 < ry + rh && y0 + 8 > ry;
                tampered[by * blocks_x + bx] = hit;
            }
        }
        Self { blocks_x, blocks_y, tampered }
    }

    pub fn blocks_x(&self) -> usize {
        self.blocks_x
    }

    pub fn blocks_y(&self) -> usize {
        self.blocks_y
    }

    pub fn is_tampered(&self, bx: usize, by: usize) -> bool {
        self.tampered[by * self.blocks_x + bx]
    }

    pub fn tampered_count(&self) -> usize {
        self.tampered.iter().filter(|&&t| t).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.tampered.iter().map(|&t| if t { 255 } else { 0 }).collect()
    }

    pub fn from_bytes(blocks_x: usize, blocks_y: usize, data: &[u8]) -> Result<Self> {
        if data.len() != blocks_x * blocks_y {
            return Err(Error::Format("mask size mismatch".into()));
        }
        Ok(Self { blocks_x, blocks_y, tampered: data.iter().map(|&v| v >= 128).collect() })
    }
}

/// A forged image, its ground truth, and the matrices involved.
#[derive(Debug, Clone)]
pub struct ForgeryCase {
    pub stream: JpegStream,
    pub kind: ForgeryKind,
    pub mask: BlockMask,
    pub q1_id: String,
    pub q2_id: String,
    /// Manipulated region (x, y, w, h); for copy-move this is the paste
    /// destination.
    pub region: (usize, usize, usize, usize),
    /// Copy-move source corner.
    pub copy_from: Option<(usize, usize)>,
}

pub struct ForgeryOptions {
    /// Side of the square manipulated region.
    pub region_size: usize,
    /// Align region corners to the 8x8 grid.
    pub grid_aligned: bool,
    /// Gaussian sigma for blur manipulations.
    pub blur_sigma: f64,
}

impl Default for ForgeryOptions {
    fn default() -> Self {
        Self { region_size: 544, grid_aligned: true, blur_sigma: 2.0 }
    }
}

fn pick_corner(limit: usize, aligned: bool, rng: &mut impl Rng) -> usize {
    if aligned { 8 * rng.random_range(0..=limit / 8) } else { rng.random_range(0..=limit) }
}

/// Separable Gaussian blur of a region, reflecting at the region borders
/// so nothing outside it is read or written.
pub fn gaussian_blur_region(
    patch: &mut PixelPatch,
    rect: (usize, usize, usize, usize),
    sigma: f64,
) {
    let (rx, ry, rw, rh) = rect;
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for d in -radius..=radius {
        kernel.push((-((d * d) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in kernel.iter_mut() {
        *k /= norm;
    }
    let reflect = |i: isize, n: isize| -> usize {
        let mut i = i;
        loop {
            if i < 0 {
                i = -i - 1;
            } else if i >= n {
                i = 2 * n - i - 1;
            } else {
                return i as usize;
            }
        }
    };

    let region: Vec<f64> = patch
        .region(rx, ry, rw, rh)
        .iter()
        .map(|&v| v as f64)
        .collect();
    // horizontal pass
    let mut tmp = vec![0.0f64; rw * rh];
    for y in 0..rh {
        for x in 0..rw {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sx = reflect(x as isize + ki as isize - radius, rw as isize);
                acc += kv * region[y * rw + sx];
            }
            tmp[y * rw + x] = acc;
        }
    }
    // vertical pass
    let mut out = vec![0u8; rw * rh];
    for y in 0..rh {
        for x in 0..rw {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sy = reflect(y as isize + ki as isize - radius, rh as isize);
                acc += kv * tmp[sy * rw + x];
            }
            out[y * rw + x] = acc.round().clamp(0.0, 255.0) as u8;
        }
    }
    patch.blit(rx, ry, rw, rh, &out);
}

/// Builds a forged image: compress the source, decompress, manipulate a
/// square region, re-compress with a different matrix. Untampered blocks
/// end up double compressed, tampered blocks single compressed.
pub fn make_forgery(
    src: &PixelPatch,
    kind: ForgeryKind,
    first_pool: &QMatrixPool,
    final_pool: &QMatrixPool,
    options: &ForgeryOptions,
    rng: &mut impl Rng,
) -> Result<ForgeryCase> {
    let size = options.region_size;
    if src.width() < size || src.height() < size {
        return Err(Error::Synthesis(format!(
            "source {}x{} smaller than region {size}",
            src.width(),
            src.height()
        )));
    }

    let q1 = first_pool.choose(rng);
    if !final_pool.entries().iter().any(|e| e.matrix != q1.matrix) {
        return Err(Error::Synthesis(
            "final pool holds no matrix distinct from the first compression".into(),
        ));
    }
    let q2 = loop {
        let candidate = final_pool.choose(rng);
        if candidate.matrix != q1.matrix {
            break candidate;
        }
    };

    let mut working = encode(src, &q1.matrix).decode_pixels()?;

    let dx = pick_corner(working.width() - size, options.grid_aligned, rng);
    let dy = pick_corner(working.height() - size, options.grid_aligned, rng);
    let mut copy_from = None;
    match kind {
        ForgeryKind::CopyMove => {
            // Aligned mode moves whole blocks, which keeps their first
            // compression intact; unaligned mode additionally requires a
            // paste offset that breaks the 8x8 grid so the pasted content
            // loses its aligned compression history.
            let (sx, sy) = loop {
                let sx = pick_corner(working.width() - size, options.grid_aligned, rng);
                let sy = pick_corner(working.height() - size, options.grid_aligned, rng);
                if (sx, sy) == (dx, dy) {
                    continue;
                }
                if !options.grid_aligned
                    && (sx.abs_diff(dx) % 8 == 0 && sy.abs_diff(dy) % 8 == 0)
                {
                    continue;
                }
                break (sx, sy);
            };
            let data = working.region(sx, sy, size, size);
            working.blit(dx, dy, size, size, &data);
            copy_from = Some((sx, sy));
        }
        ForgeryKind::Blur => {
            gaussian_blur_region(&mut working, (dx, dy, size, size), options.blur_sigma);
        }
    }

    let mask = BlockMask::from_rect(working.width(), working.height(), (dx, dy, size, size));
    Ok(ForgeryCase {
        stream: encode(&working, &q2.matrix),
        kind,
        mask,
        q1_id: q1.id.clone(),
        q2_id: q2.id.clone(),
        region: (dx, dy, size, size),
        copy_from,
    })
}

// ---------------------------------------------------------------------------
// Window-level ground truth
// ---------------------------------------------------------------------------

/// Tamper labels on the sliding-window grid used for localization
/// scoring; true = tampered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowLabels {
    pub window: usize,
    pub stride: usize,
    pub starts_x: Vec<usize>,
    pub starts_y: Vec<usize>,
    pub tampered: Vec<bool>,
}

impl WindowLabels {
    pub fn count(&self) -> usize {
        self.tampered.len()
    }
}

/// Labels each window tampered when at least half of its 8x8 blocks are
/// tampered (majority rule; the exact-half tie counts as tampered).
pub fn window_ground_truth(mask: &BlockMask, window: usize, stride: usize) -> WindowLabels {
    assert!(window.is_multiple_of(8) && stride.is_multiple_of(8), "window grid must stay 8x8-aligned");
    let width = mask.blocks_x() * 8;
    let height = mask.blocks_y() * 8;
    let starts_x = window_starts(width, window, stride);
    let starts_y = window_starts(height, window, stride);
    let wb = window / 8;
    let total = wb * wb;
    let mut tampered = Vec::with_capacity(starts_x.len() * starts_y.len());
    for &sy in &starts_y {
        for &sx in &starts_x {
            let bx0 = sx / 8;
            let by0 = sy / 8;
            let mut count = 0usize;
            for by in by0..by0 + wb {
                for bx in bx0..bx0 + wb {
                    count += mask.is_tampered(bx, by) as usize;
                }
            }
            tampered.push(2 * count >= total);
        }
    }
    WindowLabels { window, stride, starts_x, starts_y, tampered }
}

// ---------------------------------------------------------------------------
// Case bundles on disk
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CaseProvenance {
    kind: ForgeryKind,
    q1_id: String,
    q2_id: String,
    region: (usize, usize, usize, usize),
    copy_from: Option<(usize, usize)>,
}

impl ForgeryCase {
    /// Writes forged.jpg, mask.pgm (8x8-block resolution, 255 = tampered),
    /// and provenance.json into `dir`.
    pub fn save_bundle(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.stream.write_file(dir.join("forged.jpg"))?;
        pgm::write_pgm(
            dir.join("mask.pgm"),
            self.mask.blocks_x(),
            self.mask.blocks_y(),
            &self.mask.to_bytes(),
        )?;
        let prov = CaseProvenance {
            kind: self.kind,
            q1_id: self.q1_id.clone(),
            q2_id: self.q2_id.clone(),
            region: self.region,
            copy_from: self.copy_from,
        };
        let json = serde_json::to_string_pretty(&prov)
            .map_err(|e| Error::Format(format!("provenance: {e}")))?;
        std::fs::write(dir.join("provenance.json"), json)?;
        Ok(())
    }

    pub fn load_bundle(dir: impl AsRef<Path>) -> Result<ForgeryCase> {
        let dir = dir.as_ref();
        let stream = JpegStream::read_file(dir.join("forged.jpg"))?;
        let (w, h, data) = pgm::read_pgm(dir.join("mask.pgm"))?;
        let mask = BlockMask::from_bytes(w, h, &data)?;
        let prov: CaseProvenance =
            serde_json::from_str(&std::fs::read_to_string(dir.join("provenance.json"))?)
                .map_err(|e| Error::Format(format!("provenance: {e}")))?;
        Ok(ForgeryCase {
            stream,
            kind: prov.kind,
            mask,
            q1_id: prov.q1_id,
            q2_id: prov.q2_id,
            region: prov.region,
            copy_from: prov.copy_from,
        })
    }
}
