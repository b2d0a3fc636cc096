//! Canonical Huffman tables for baseline JPEG entropy coding.

use crate::bitio::BitReader;
use crate::{Error, Result};

/// Encoder-side table: code and length per symbol value.
pub struct HuffEncoder {
    code: [u16; 256],
    size: [u8; 256],
}

impl HuffEncoder {
    /// Builds codes from a DHT-style (bits, values) specification.
    pub fn new(bits: &[u8; 16], vals: &[u8]) -> Self {
        let mut code = [0u16; 256];
        let mut size = [0u8; 256];
        let mut next_code = 0u16;
        let mut k = 0usize;
        for (len_idx, &count) in bits.iter().enumerate() {
            let len = len_idx as u8 + 1;
            for _ in 0..count {
                let sym = vals[k] as usize;
                code[sym] = next_code;
                size[sym] = len;
                next_code += 1;
                k += 1;
            }
            next_code <<= 1;
        }
        Self { code, size }
    }

    pub fn lookup(&self, symbol: u8) -> (u16, u8) {
        let s = self.size[symbol as usize];
        debug_assert!(s > 0, "symbol {symbol:#04x} has no code");
        (self.code[symbol as usize], s)
    }

    pub fn has(&self, symbol: u8) -> bool {
        self.size[symbol as usize] > 0
    }
}

/// Decoder-side table using the canonical min/max-code method.
#[derive(Debug, Clone)]
pub struct HuffDecoder {
    mincode: [u32; 17],
    maxcode: [i64; 17], // -1 when no codes of that length
    valptr: [usize; 17],
    vals: Vec<u8>,
}

impl HuffDecoder {
    /// Validates and ingests a (bits, values) specification from a DHT segment.
    pub fn new(bits: &[u8; 16], vals: Vec<u8>) -> Result<Self> {
        let total: usize = bits.iter().map(|&b| b as usize).sum();
        if total == 0 || total > 256 {
            return Err(Error::Marker(format!("huffman table with {total} symbols")));
        }
        if vals.len() != total {
            return Err(Error::Marker("huffman table value count mismatch".into()));
        }
        // Reject over-subscribed code space.
        let mut space = 0u32;
        for (i, &count) in bits.iter().enumerate() {
            space += (count as u32) << (16 - (i + 1));
        }
        if space > 1 << 16 {
            return Err(Error::Marker("huffman table overflows code space".into()));
        }
        let mut mincode = [0u32; 17];
        let mut maxcode = [-1i64; 17];
        let mut valptr = [0usize; 17];
        let mut code = 0u32;
        let mut k = 0usize;
        for len in 1..=16usize {
            let count = bits[len - 1] as usize;
            if count > 0 {
                valptr[len] = k;
                mincode[len] = code;
                code += count as u32;
                maxcode[len] = (code - 1) as i64;
                k += count;
            }
            code <<= 1;
        }
        Ok(Self { mincode, maxcode, valptr, vals })
    }

    /// Reads one Huffman-coded symbol from the bit stream.
    pub fn decode(&self, reader: &mut BitReader<'_>) -> Result<u8> {
        let mut code = 0u32;
        for len in 1..=16usize {
            code = (code << 1) | reader.next_bit()?;
            if self.maxcode[len] >= 0 && (code as i64) <= self.maxcode[len] {
                let idx = self.valptr[len] + (code - self.mincode[len]) as usize;
                return Ok(self.vals[idx]);
            }
        }
        Err(Error::Huffman("code longer than 16 bits".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitio::BitWriter;
    use crate::tables::{STD_AC_BITS, STD_AC_VALS, STD_DC_BITS, STD_DC_VALS};

    #[test]
    fn encode_decode_all_dc_symbols() {
        let enc = HuffEncoder::new(&STD_DC_BITS, &STD_DC_VALS);
        let dec = HuffDecoder::new(&STD_DC_BITS, STD_DC_VALS.to_vec()).unwrap();
        let mut w = BitWriter::new();
        for sym in STD_DC_VALS {
            let (code, size) = enc.lookup(sym);
            w.write_bits(code as u32, size);
        }
        let bytes = w.finish();
        let mut r = BitReader::new(&bytes);
        for sym in STD_DC_VALS {
            assert_eq!(dec.decode(&mut r).unwrap(), sym);
        }
    }

    #[test]
    fn encode_decode_all_ac_symbols() {
        let enc = HuffEncoder::new(&STD_AC_BITS, &STD_AC_VALS);
        let dec = HuffDecoder::new(&STD_AC_BITS, STD_AC_VALS.to_vec()).unwrap();
        let mut w = BitWriter::new();
        for sym in STD_AC_VALS {
            let (code, size) = enc.lookup(sym);
            w.write_bits(code as u32, size);
        }
        let bytes = w.finish();
        let mut r = BitReader::new(&bytes);
        for sym in STD_AC_VALS {
            assert_eq!(dec.decode(&mut r).unwrap(), sym);
        }
    }

    #[test]
    fn rejects_oversubscribed_table() {
        let mut bits = [0u8; 16];
        bits[0] = 3; // three 1-bit codes cannot exist
        assert!(HuffDecoder::new(&bits, vec![0, 1, 2]).is_err());
    }

    #[test]
    fn rejects_count_mismatch() {
        let mut bits = [0u8; 16];
        bits[1] = 2;
        assert!(HuffDecoder::new(&bits, vec![0]).is_err());
    }

    #[test]
    fn invalid_code_reports_huffman_error() {
        // Table with a single 1-bit code "0"; an all-ones stream never matches.
        let mut bits = [0u8; 16];
        bits[0] = 1;
        let dec = HuffDecoder::new(&bits, vec![5]).unwrap();
        let bytes = [0xFF, 0x00, 0xFF, 0x00, 0xFF, 0x00];
        let mut r = BitReader::new(&bytes);
        assert!(matches!(dec.decode(&mut r), Err(Error::Huffman(_))));
    }
}
