//! Bit-level reader/writer for entropy-coded scan data, including 0xFF
//! byte stuffing and restart-marker detection.

use crate::{Error, Result};

/// MSB-first bit writer that stuffs a 0x00 after every emitted 0xFF.
pub struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        Self { out: Vec::new(), acc: 0, nbits: 0 }
    }

    pub fn write_bits(&mut self, code: u32, len: u8) {
        debug_assert!(len <= 24 && (len == 32 || code < (1u32 << len)));
        self.acc = (self.acc << len) | code;
        self.nbits += len as u32;
        while self.nbits >= 8 {
            let byte = (self.acc >> (self.nbits - 8)) as u8;
            self.push(byte);
            self.nbits -= 8;
            self.acc &= (1u32 << self.nbits) - 1;
        }
    }

    fn push(&mut self, byte: u8) {
        self.out.push(byte);
        if byte == 0xFF {
            self.out.push(0x00);
        }
    }

    /// Pads the final partial byte with 1-bits and returns the scan bytes.
    pub fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            let pad = 8 - self.nbits;
            let byte = ((self.acc << pad) | ((1u32 << pad) - 1)) as u8;
            self.push(byte);
            self.nbits = 0;
        }
        self.out
    }
}

impl Default for BitWriter {
    fn default() -> Self {
        Self::new()
    }
}

/// MSB-first bit reader over entropy-coded data.
///
/// Stuffed 0xFF 0x00 pairs are collapsed to a single 0xFF. Any other
/// 0xFF-prefixed marker terminates the bit supply; restart markers can be
/// consumed explicitly at block boundaries.
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u32,
    nbits: u32,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0, acc: 0, nbits: 0 }
    }

    /// Byte offset of the next unread raw byte.
    pub fn position(&self) -> usize {
        self.pos
    }

    fn load_byte(&mut self) -> Result<()> {
        if self.pos >= self.data.len() {
            return Err(Error::Huffman("scan data ended unexpectedly".into()));
        }
        let b = self.data[self.pos];
        if b == 0xFF {
            match self.data.get(self.pos + 1) {
                Some(0x00) => {
                    self.pos += 2;
                }
                Some(m) => {
                    return Err(Error::Huffman(format!(
                        "marker 0xFF{m:02X} inside entropy-coded segment"
                    )));
                }
                None => return Err(Error::Huffman("scan data ended at 0xFF".into())),
            }
        } else {
            self.pos += 1;
        }
        self.acc = (self.acc << 8) | b as u32;
        self.nbits += 8;
        Ok(())
    }

    pub fn next_bit(&mut self) -> Result<u32> {
        if self.nbits == 0 {
            self.load_byte()?;
        }
        self.nbits -= 1;
        Ok((self.acc >> self.nbits) & 1)
    }

    /// Reads `len` bits MSB-first.
    pub fn receive(&mut self, len: u8) -> Result<u32> {
        let mut v = 0u32;
        for _ in 0..len {
            v = (v << 1) | self.next_bit()?;
        }
        Ok(v)
    }

    /// Consumes a byte-aligned restart marker if one is next, discarding
    /// any buffered padding bits. Returns true when a marker was eaten.
    pub fn take_restart(&mut self) -> bool {
        if self.pos + 1 < self.data.len()
            && self.data[self.pos] == 0xFF
            && (0xD0..=0xD7).contains(&self.data[self.pos + 1])
        {
            self.pos += 2;
            self.acc = 0;
            self.nbits = 0;
            true
        } else {
            false
        }
    }
}
