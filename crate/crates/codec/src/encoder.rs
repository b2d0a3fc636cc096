//! Baseline JPEG encoder for single-component patches.

use crate::bitio::BitWriter;
use crate::dct;
use crate::decoder::QuantizedBlockGrid;
use crate::huffman::HuffEncoder;
use crate::pixels::PixelPatch;
use crate::qmatrix::QMatrix;
use crate::quant;
use crate::stream::JpegStream;
use crate::tables::{
    APP0, DHT, DQT, EOI, SOF0, SOI, SOS, STD_AC_BITS, STD_AC_VALS, STD_DC_BITS, STD_DC_VALS,
    ZIGZAG,
};
use crate::{Error, Result};

fn push_marker(out: &mut Vec<u8>, marker: u8) {
    out.push(0xFF);
    out.push(marker);
}

fn push_segment(out: &mut Vec<u8>, marker: u8, payload: &[u8]) {
    push_marker(out, marker);
    let len = (payload.len() + 2) as u16;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(payload);
}

fn jfif_app0() -> Vec<u8> {
    let mut p = Vec::with_capacity(14);
    p.extend_from_slice(b"JFIF\0");
    p.extend_from_slice(&[1, 1]); // version 1.1
    p.push(0); // aspect-ratio units
    p.extend_from_slice(&1u16.to_be_bytes());
    p.extend_from_slice(&1u16.to_be_bytes());
    p.extend_from_slice(&[0, 0]); // no thumbnail
    p
}

/// DQT payload: precision 0 (8-bit), table id 0, steps in zigzag order.
fn dqt_payload(q: &QMatrix) -> Vec<u8> {
    let mut p = Vec::with_capacity(65);
    p.push(0x00);
    for zz in 0..64 {
        let natural = crate::tables::DEZIGZAG[zz];
        p.push(q.steps()[natural] as u8);
    }
    p
}

fn sof0_payload(width: usize, height: usize) -> Vec<u8> {
    let mut p = Vec::with_capacity(9);
    p.push(8); // sample precision
    p.extend_from_slice(&(height as u16).to_be_bytes());
    p.extend_from_slice(&(width as u16).to_be_bytes());
    p.push(1); // one component
    p.push(1); // component id
    p.push(0x11); // 1x1 sampling
    p.push(0); // quant table 0
    p
}

fn dht_payload(class: u8, bits: &[u8; 16], vals: &[u8]) -> Vec<u8> {
    let mut p = Vec::with_capacity(17 + vals.len());
    p.push(class << 4); // table id 0
    p.extend_from_slice(bits);
    p.extend_from_slice(vals);
    p
}

fn sos_payload() -> Vec<u8> {
    vec![1, 1, 0x00, 0, 63, 0]
}

/// Magnitude category of a coefficient: number of bits of |v|.
fn bit_size(v: i32) -> u8 {
    (32 - v.unsigned_abs().leading_zeros()) as u8
}

/// Low `size` bits encoding v per the JPEG magnitude convention.
fn magnitude_bits(v: i32, size: u8) -> u32 {
    if v >= 0 { v as u32 } else { (v - 1) as u32 & ((1u32 << size) - 1) }
}

struct ScanEncoder {
    dc: HuffEncoder,
    ac: HuffEncoder,
    writer: BitWriter,
    pred: i32,
}

impl ScanEncoder {
    fn new() -> Self {
        Self {
            dc: HuffEncoder::new(&STD_DC_BITS, &STD_DC_VALS),
            ac: HuffEncoder::new(&STD_AC_BITS, &STD_AC_VALS),
            writer: BitWriter::new(),
            pred: 0,
        }
    }

    /// Entropy-codes one block of quantized coefficients in natural order.
    fn push_block(&mut self, block: &[i32; 64]) -> Result<()> {
        let mut zz = [0i32; 64];
        for natural in 0..64 {
            zz[ZIGZAG[natural]] = block[natural];
        }

        let diff = zz[0] - self.pred;
        self.pred = zz[0];
        let dc_size = bit_size(diff);
        if dc_size > 11 {
            return Err(Error::Unencodable(diff as i64));
        }
        let (code, len) = self.dc.lookup(dc_size);
        self.writer.write_bits(code as u32, len);
        if dc_size > 0 {
            self.writer.write_bits(magnitude_bits(diff, dc_size), dc_size);
        }

        let mut run = 0u32;
        for &v in &zz[1..] {
            if v == 0 {
                run += 1;
                continue;
            }
            while run > 15 {
                let (code, len) = self.ac.lookup(0xF0); // ZRL
                self.writer.write_bits(code as u32, len);
                run -= 16;
            }
            let size = bit_size(v);
            if size > 10 {
                return Err(Error::Unencodable(v as i64));
            }
            let symbol = ((run as u8) << 4) | size;
            let (code, len) = self.ac.lookup(symbol);
            self.writer.write_bits(code as u32, len);
            self.writer.write_bits(magnitude_bits(v, size), size);
            run = 0;
        }
        if run > 0 {
            let (code, len) = self.ac.lookup(0x00); // EOB
            self.writer.write_bits(code as u32, len);
        }
        Ok(())
    }

    fn finish(self) -> Vec<u8> {
        self.writer.finish()
    }
}

fn assemble(width: usize, height: usize, q: &QMatrix, scan: Vec<u8>) -> JpegStream {
    let mut out = Vec::with_capacity(scan.len() + 256);
    push_marker(&mut out, SOI);
    push_segment(&mut out, APP0, &jfif_app0());
    push_segment(&mut out, DQT, &dqt_payload(q));
    push_segment(&mut out, SOF0, &sof0_payload(width, height));
    push_segment(&mut out, DHT, &dht_payload(0, &STD_DC_BITS, &STD_DC_VALS));
    push_segment(&mut out, DHT, &dht_payload(1, &STD_AC_BITS, &STD_AC_VALS));
    push_segment(&mut out, SOS, &sos_payload());
    out.extend_from_slice(&scan);
    push_marker(&mut out, EOI);
    JpegStream::from_bytes(out)
}

/// Compresses a pixel patch: level shift, 2D DCT, quantization by `q`,
/// and Huffman entropy coding with the standard luminance tables.
pub fn encode(patch: &PixelPatch, q: &QMatrix) -> JpegStream {
    let mut scan = ScanEncoder::new();
    for by in 0..patch.blocks_y() {
        for bx in 0..patch.blocks_x() {
            let samples = patch.block(bx, by);
            let coeffs = dct::forward(&dct::level_shift(&samples));
            let quantized = quant::quantize(&coeffs, q);
            scan.push_block(&quantized)
                .expect("pixel-derived coefficients are always in baseline range");
        }
    }
    assemble(patch.width(), patch.height(), q, scan.finish())
}

/// Serializes an existing grid of quantized coefficients back into a
/// stream, embedding the grid's Q-matrix. Fails if any coefficient falls
/// outside what the standard baseline tables can represent.
pub fn encode_coefficients(grid: &QuantizedBlockGrid) -> Result<JpegStream> {
    let mut scan = ScanEncoder::new();
    for block in grid.blocks() {
        scan.push_block(block)?;
    }
    Ok(assemble(grid.blocks_x() * 8, grid.blocks_y() * 8, grid.qmatrix(), scan.finish()))
}
