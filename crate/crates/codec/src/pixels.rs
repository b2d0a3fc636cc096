//! Pixel-domain patches of 8-bit luma samples.

use crate::{Error, Result};

/// A grayscale image whose dimensions are multiples of 8, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelPatch {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl PixelPatch {
    /// Wraps row-major samples; dimensions must be nonzero multiples of 8.
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || !width.is_multiple_of(8) || !height.is_multiple_of(8) {
            return Err(Error::InvalidDimensions { width, height });
        }
        if samples.len() != width * height {
            return Err(Error::InvalidDimensions { width, height });
        }
        Ok(Self { width, height, samples })
    }

    /// A patch filled with a single sample value.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn blocks_x(&self) -> usize {
        self.width / 8
    }

    pub fn blocks_y(&self) -> usize {
        self.height / 8
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [u8] {
        &mut self.samples
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.samples[y * self.width + x] = value;
    }

    /// Copies out the 8x8 block at block coordinates (bx, by), row-major.
    pub fn block(&self, bx: usize, by: usize) -> [u8; 64] {
        let mut out = [0u8; 64];
        let x0 = bx * 8;
        let y0 = by * 8;
        for row in 0..8 {
            let start = (y0 + row) * self.width + x0;
            out[row * 8..row * 8 + 8].copy_from_slice(&self.samples[start..start + 8]);
        }
        out
    }

    /// Writes an 8x8 block at block coordinates (bx, by).
    pub fn set_block(&mut self, bx: usize, by: usize, block: &[u8; 64]) {
        let x0 = bx * 8;
        let y0 = by * 8;
        for row in 0..8 {
            let start = (y0 + row) * self.width + x0;
            self.samples[start..start + 8].copy_from_slice(&block[row * 8..row * 8 + 8]);
        }
    }

    /// Copies the axis-aligned region (x, y, w, h) into a new buffer, row-major.
    pub fn region(&self, x: usize, y: usize, w: usize, h: usize) -> Vec<u8> {
        assert!(x + w <= self.width && y + h <= self.height, "region out of bounds");
        let mut out = Vec::with_capacity(w * h);
        for row in 0..h {
            let start = (y + row) * self.width + x;
            out.extend_from_slice(&self.samples[start..start + w]);
        }
        out
    }

    /// Overwrites the region (x, y, w, h) from a row-major buffer.
    pub fn blit(&mut self, x: usize, y: usize, w: usize, h: usize, data: &[u8]) {
        assert!(x + w <= self.width && y + h <= self.height, "region out of bounds");
        assert_eq!(data.len(), w * h);
        for row in 0..h {
            let start = (y + row) * self.width + x;
            self.samples[start..start + w].copy_from_slice(&data[row * w..row * w + w]);
        }
    }
}
