//! Baseline JPEG decoder: marker parsing, entropy decoding to quantized
//! coefficients, and full reconstruction to pixels.

use crate::bitio::BitReader;
use crate::dct;
use crate::huffman::HuffDecoder;
use crate::pixels::PixelPatch;
use crate::qmatrix::QMatrix;
use crate::quant;
use crate::tables::{self, DEZIGZAG};
use crate::{Error, Result};

/// Per-patch grid of 8x8 quantized DCT coefficient blocks, plus the
/// Q-matrix the stream header declares for them. Values are exactly the
/// integers stored in the bitstream; nothing is dequantized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedBlockGrid {
    blocks_x: usize,
    blocks_y: usize,
    coeffs: Vec<[i32; 64]>,
    qmatrix: QMatrix,
}

impl QuantizedBlockGrid {
    pub fn new(blocks_x: usize, blocks_y: usize, coeffs: Vec<[i32; 64]>, qmatrix: QMatrix) -> Self {
        assert_eq!(coeffs.len(), blocks_x * blocks_y, "block count mismatch");
        Self { blocks_x, blocks_y, coeffs, qmatrix }
    }

    pub fn blocks_x(&self) -> usize {
        self.blocks_x
    }

    pub fn blocks_y(&self) -> usize {
        self.blocks_y
    }

    pub fn block_count(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficients of the block at (bx, by) in natural row-major order.
    pub fn block(&self, bx: usize, by: usize) -> &[i32; 64] {
        &self.coeffs[by * self.blocks_x + bx]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[i32; 64]> {
        self.coeffs.iter()
    }

    pub fn qmatrix(&self) -> &QMatrix {
        &self.qmatrix
    }

    /// Copies out the top-left `blocks_x` x `blocks_y` sub-grid.
    pub fn crop_top_left(&self, blocks_x: usize, blocks_y: usize) -> Self {
        assert!(blocks_x <= self.blocks_x && blocks_y <= self.blocks_y);
        self.window(0, 0, blocks_x, blocks_y)
    }

    /// Copies out an arbitrary block-aligned window.
    pub fn window(&self, bx0: usize, by0: usize, blocks_x: usize, blocks_y: usize) -> Self {
        assert!(bx0 + blocks_x <= self.blocks_x && by0 + blocks_y <= self.blocks_y);
        let mut coeffs = Vec::with_capacity(blocks_x * blocks_y);
        for by in by0..by0 + blocks_y {
            for bx in bx0..bx0 + blocks_x {
                coeffs.push(*self.block(bx, by));
            }
        }
        Self::new(blocks_x, blocks_y, coeffs, self.qmatrix.clone())
    }
}

#[derive(Debug, Default)]
struct Headers {
    qtables: [Option<QMatrix>; 4],
    dc_tables: [Option<HuffDecoder>; 4],
    ac_tables: [Option<HuffDecoder>; 4],
    width: usize,
    height: usize,
    component_qtable: usize,
    component_dc: usize,
    component_ac: usize,
    scan_offset: usize,
}

fn read_u16(bytes: &[u8], pos: usize) -> Result<u16> {
    if pos + 1 >= bytes.len() {
        return Err(Error::Truncated);
    }
    Ok(u16::from_be_bytes([bytes[pos], bytes[pos + 1]]))
}

fn parse_dqt(payload: &[u8], headers: &mut Headers) -> Result<()> {
    let mut pos = 0;
    while pos < payload.len() {
        let pq_tq = payload[pos];
        pos += 1;
        let precision = pq_tq >> 4;
        let id = (pq_tq & 0x0F) as usize;
        if id > 3 {
            return Err(Error::Marker(format!("DQT table id {id}")));
        }
        let step_bytes = if precision == 0 { 64 } else { 128 };
        if precision > 1 {
            return Err(Error::Marker(format!("DQT precision {precision}")));
        }
        if pos + step_bytes > payload.len() {
            return Err(Error::Marker("DQT segment too short".into()));
        }
        let mut steps = [0u16; 64];
        for zz in 0..64 {
            let raw = if precision == 0 {
                payload[pos + zz] as u32
            } else {
                u16::from_be_bytes([payload[pos + 2 * zz], payload[pos + 2 * zz + 1]]) as u32
            };
            if !(1..=255).contains(&raw) {
                return Err(Error::QStepOutOfRange { index: DEZIGZAG[zz], value: raw });
            }
            steps[DEZIGZAG[zz]] = raw as u16;
        }
        headers.qtables[id] = Some(QMatrix::from_steps(steps)?);
        pos += step_bytes;
    }
    Ok(())
}

fn parse_dht(payload: &[u8], headers: &mut Headers) -> Result<()> {
    let mut pos = 0;
    while pos < payload.len() {
        if pos + 17 > payload.len() {
            return Err(Error::Marker("DHT segment too short".into()));
        }
        let tc_th = payload[pos];
        let class = tc_th >> 4;
        let id = (tc_th & 0x0F) as usize;
        if class > 1 || id > 3 {
            return Err(Error::Marker(format!("DHT class {class} id {id}")));
        }
        let mut bits = [0u8; 16];
        bits.copy_from_slice(&payload[pos + 1..pos + 17]);
        let total: usize = bits.iter().map(|&b| b as usize).sum();
        if pos + 17 + total > payload.len() {
            return Err(Error::Marker("DHT values truncated".into()));
        }
        let vals = payload[pos + 17..pos + 17 + total].to_vec();
        let table = HuffDecoder::new(&bits, vals)?;
        if class == 0 {
            headers.dc_tables[id] = Some(table);
        } else {
            headers.ac_tables[id] = Some(table);
        }
        pos += 17 + total;
    }
    Ok(())
}

fn parse_sof0(payload: &[u8], headers: &mut Headers) -> Result<()> {
    if payload.len() < 6 {
        return Err(Error::Marker("SOF0 segment too short".into()));
    }
    let precision = payload[0];
    if precision != 8 {
        return Err(Error::Unsupported(format!("{precision}-bit sample precision")));
    }
    let height = u16::from_be_bytes([payload[1], payload[2]]) as usize;
    let width = u16::from_be_bytes([payload[3], payload[4]]) as usize;
    if width == 0 || height == 0 {
        return Err(Error::Marker("zero frame dimensions".into()));
    }
    let components = payload[5] as usize;
    if components != 1 {
        return Err(Error::Unsupported(format!("{components}-component stream")));
    }
    if payload.len() < 6 + 3 {
        return Err(Error::Marker("SOF0 component spec truncated".into()));
    }
    let tq = payload[8] as usize;
    if tq > 3 {
        return Err(Error::Marker(format!("component references DQT id {tq}")));
    }
    headers.width = width;
    headers.height = height;
    headers.component_qtable = tq;
    Ok(())
}

fn parse_sos(payload: &[u8], headers: &mut Headers) -> Result<()> {
    if payload.len() < 4 {
        return Err(Error::Marker("SOS segment too short".into()));
    }
    let ns = payload[0] as usize;
    if ns != 1 {
        return Err(Error::Unsupported(format!("{ns}-component scan")));
    }
    let td_ta = payload[2];
    headers.component_dc = (td_ta >> 4) as usize;
    headers.component_ac = (td_ta & 0x0F) as usize;
    if headers.component_dc > 3 || headers.component_ac > 3 {
        return Err(Error::Marker("scan references huffman table id > 3".into()));
    }
    Ok(())
}

/// Walks the marker structure up to the start of entropy-coded data.
fn parse_headers(bytes: &[u8]) -> Result<Headers> {
    if bytes.len() < 2 || bytes[0] != 0xFF || bytes[1] != tables::SOI {
        return Err(Error::Marker("missing SOI".into()));
    }
    let mut headers = Headers::default();
    let mut pos = 2usize;
    let mut seen_sof = false;
    loop {
        if pos >= bytes.len() {
            return Err(Error::Truncated);
        }
        if bytes[pos] != 0xFF {
            return Err(Error::Marker(format!(
                "expected marker at offset {pos}, found {:#04x}",
                bytes[pos]
            )));
        }
        // Optional fill bytes before the marker code.
        let mut mpos = pos + 1;
        while mpos < bytes.len() && bytes[mpos] == 0xFF {
            mpos += 1;
        }
        if mpos >= bytes.len() {
            return Err(Error::Truncated);
        }
        let marker = bytes[mpos];
        pos = mpos + 1;
        match marker {
            tables::SOI => return Err(Error::Marker("unexpected second SOI".into())),
            tables::EOI => return Err(Error::Marker("EOI before scan data".into())),
            tables::SOF2 => return Err(Error::Unsupported("progressive JPEG".into())),
            0xC1 | 0xC3 | 0xC5..=0xC7 | 0xC9..=0xCB | 0xCD..=0xCF => {
                return Err(Error::Unsupported(format!("SOF marker 0xFF{marker:02X}")));
            }
            0xD0..=0xD7 => {
                return Err(Error::Marker("restart marker outside scan".into()));
            }
            _ => {}
        }
        let len = read_u16(bytes, pos)? as usize;
        if len < 2 || pos + len > bytes.len() {
            return Err(Error::Marker(format!("segment 0xFF{marker:02X} length {len}")));
        }
        let payload = &bytes[pos + 2..pos + len];
        match marker {
            tables::DQT => parse_dqt(payload, &mut headers)?,
            tables::DHT => parse_dht(payload, &mut headers)?,
            tables::SOF0 => {
                parse_sof0(payload, &mut headers)?;
                seen_sof = true;
            }
            tables::DRI => {
                if payload.len() != 2 {
                    return Err(Error::Marker("DRI length".into()));
                }
                // Restart interval noted but not needed: restart markers
                // are consumed wherever they appear between blocks.
            }
            tables::SOS => {
                if !seen_sof {
                    return Err(Error::Marker("SOS before SOF0".into()));
                }
                parse_sos(payload, &mut headers)?;
                headers.scan_offset = pos + len;
                return Ok(headers);
            }
            0xE0..=0xEF | tables::COM => {} // APPn / comment: skip
            other => return Err(Error::Marker(format!("unexpected marker 0xFF{other:02X}"))),
        }
        pos += len;
    }
}

fn extend(value: u32, size: u8) -> i32 {
    if size == 0 {
        0
    } else if value < (1u32 << (size - 1)) {
        value as i32 - (1i32 << size) + 1
    } else {
        value as i32
    }
}

/// Entropy-decodes the scan into quantized coefficient blocks.
pub fn decode_coefficients(bytes: &[u8]) -> Result<QuantizedBlockGrid> {
    let headers = parse_headers(bytes)?;
    let qmatrix = headers.qtables[headers.component_qtable]
        .clone()
        .ok_or_else(|| Error::Marker("scan references undefined DQT table".into()))?;
    let dc = headers.dc_tables[headers.component_dc]
        .as_ref()
        .ok_or_else(|| Error::Marker("scan references undefined DC table".into()))?;
    let ac = headers.ac_tables[headers.component_ac]
        .as_ref()
        .ok_or_else(|| Error::Marker("scan references undefined AC table".into()))?;

    let blocks_x = headers.width.div_ceil(8);
    let blocks_y = headers.height.div_ceil(8);
    let mut reader = BitReader::new(&bytes[headers.scan_offset..]);
    let mut coeffs = Vec::with_capacity(blocks_x * blocks_y);
    let mut pred = 0i32;
    for _ in 0..blocks_x * blocks_y {
        if reader.take_restart() {
            pred = 0;
        }
        let mut block = [0i32; 64];

        let dc_size = dc.decode(&mut reader)?;
        if dc_size > 15 {
            return Err(Error::Huffman(format!("DC category {dc_size}")));
        }
        let diff = extend(reader.receive(dc_size)?, dc_size);
        pred = pred
            .checked_add(diff)
            .ok_or(Error::CoefficientRange(pred as i64 + diff as i64))?;
        if pred.unsigned_abs() > 32767 {
            return Err(Error::CoefficientRange(pred as i64));
        }
        block[0] = pred;

        let mut k = 1usize;
        while k <= 63 {
            let run_size = ac.decode(&mut reader)?;
            let run = (run_size >> 4) as usize;
            let size = run_size & 0x0F;
            if size == 0 {
                if run == 15 {
                    k += 16; // ZRL
                    continue;
                }
                break; // EOB
            }
            k += run;
            if k > 63 {
                return Err(Error::Huffman(format!("AC run past block end (k={k})")));
            }
            if size > 15 {
                return Err(Error::Huffman(format!("AC category {size}")));
            }
            let value = extend(reader.receive(size)?, size);
            block[DEZIGZAG[k]] = value;
            k += 1;
        }
        coeffs.push(block);
    }
    Ok(QuantizedBlockGrid::new(blocks_x, blocks_y, coeffs, qmatrix))
}

/// Reconstructs one block to unsigned samples: dequantize, inverse DCT,
/// shift by +128, round half away from zero, clamp to 0..=255.
pub(crate) fn reconstruct_block(values: &[i32; 64], q: &QMatrix) -> [u8; 64] {
    let spatial = dct::inverse(&quant::dequantize(values, q));
    let mut out = [0u8; 64];
    for (o, &v) in out.iter_mut().zip(spatial.iter()) {
        *o = quant::round_half_away(v + 128.0).clamp(0, 255) as u8;
    }
    out
}

/// Fully decompresses the stream to pixels.
pub fn decode_pixels(bytes: &[u8]) -> Result<PixelPatch> {
    let grid = decode_coefficients(bytes)?;
    let width = grid.blocks_x() * 8;
    let height = grid.blocks_y() * 8;
    let mut patch = PixelPatch::filled(width, height, 0)?;
    for by in 0..grid.blocks_y() {
        for bx in 0..grid.blocks_x() {
            let samples = reconstruct_block(grid.block(bx, by), grid.qmatrix());
            patch.set_block(bx, by, &samples);
        }
    }
    Ok(patch)
}

/// Parses only the headers and returns the Q-matrix the scan references.
pub fn embedded_qmatrix(bytes: &[u8]) -> Result<QMatrix> {
    let headers = parse_headers(bytes)?;
    headers.qtables[headers.component_qtable]
        .clone()
        .ok_or_else(|| Error::Marker("scan references undefined DQT table".into()))
}

/// Parses only the headers and returns (width, height) from SOF0.
pub fn frame_dimensions(bytes: &[u8]) -> Result<(usize, usize)> {
    let headers = parse_headers(bytes)?;
    Ok((headers.width, headers.height))
}
