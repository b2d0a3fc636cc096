//! Owned JPEG byte streams and the recompression chain.

use crate::decoder::{self, QuantizedBlockGrid};
use crate::encoder;
use crate::pixels::PixelPatch;
use crate::qmatrix::QMatrix;
use crate::Result;
use std::path::Path;

/// An in-memory JPEG file. Construction performs no validation; decoding
/// operations parse and report typed errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JpegStream {
    bytes: Vec<u8>,
}

impl JpegStream {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self { bytes }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_bytes(std::fs::read(path)?))
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, &self.bytes)?)
    }

    /// Entropy-decodes the quantized coefficients without reconstructing
    /// pixels; no dequantization, IDCT, rounding, or truncation happens.
    pub fn decode_coefficients(&self) -> Result<QuantizedBlockGrid> {
        decoder::decode_coefficients(&self.bytes)
    }

    /// Full decompression: entropy decode, dequantize, inverse DCT,
    /// +128 shift, round half away from zero, clamp to 0..=255.
    pub fn decode_pixels(&self) -> Result<PixelPatch> {
        decoder::decode_pixels(&self.bytes)
    }

    /// The Q-matrix referenced by the scan component.
    pub fn qmatrix(&self) -> Result<QMatrix> {
        decoder::embedded_qmatrix(&self.bytes)
    }

    /// (width, height) declared in the frame header.
    pub fn dimensions(&self) -> Result<(usize, usize)> {
        decoder::frame_dimensions(&self.bytes)
    }

    /// Decompresses fully and re-encodes with a new Q-matrix, modeling a
    /// second compression generation including pixel rounding and clamping.
    pub fn recompress(&self, q2: &QMatrix) -> Result<JpegStream> {
        Ok(encoder::encode(&self.decode_pixels()?, q2))
    }
}
