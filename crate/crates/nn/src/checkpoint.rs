//! Versioned binary checkpoints: a JSON model config, a caller-supplied
//! JSON metadata blob, and named parameter tensors stored as 32-bit
//! little-endian reals. The format is self-describing so other tooling
//! can reload it:
//!
//! ```text
//! magic   b"RQNC"
//! version u32 LE (currently 1)
//! u32 LE config length, then ModelConfig JSON
//! u32 LE extra length, then caller JSON
//! u32 LE tensor count, then per tensor:
//!     u16 LE name length, name bytes (UTF-8)
//!     u8 rank, rank x u32 LE dims
//!     dims-product x f32 LE values
//! ```

use crate::densenet::{DenseNet, ModelConfig};
use crate::scalar::Real;
use crate::{Error, Result};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"RQNC";
const VERSION: u32 = 1;

pub fn save<F: Real>(path: impl AsRef<Path>, model: &mut DenseNet<F>, extra_json: &str) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());

    let config = serde_json::to_vec(model.config())
        .map_err(|e| Error::Checkpoint(format!("config serialization: {e}")))?;
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(extra_json.len() as u32).to_le_bytes());
    out.extend_from_slice(extra_json.as_bytes());

    let mut tensors: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
    model.visit_params(&mut |name, p| {
        let data = p.value.data().iter().map(|v| v.to_f64() as f32).collect();
        tensors.push((name.to_string(), p.value.shape().to_vec(), data));
    });

    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, shape, data) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(shape.len() as u8);
        for d in &shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Checkpoint("file truncated".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

/// Rebuilds the model from a checkpoint, returning it with the stored
/// extra-metadata JSON.
pub fn load<F: Real>(path: impl AsRef<Path>) -> Result<(DenseNet<F>, String)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { data: &bytes, pos: 0 };

    if cur.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let config_len = cur.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(cur.take(config_len)?)
        .map_err(|e| Error::Checkpoint(format!("config parse: {e}")))?;
    let extra_len = cur.u32()? as usize;
    let extra = String::from_utf8(cur.take(extra_len)?.to_vec())
        .map_err(|e| Error::Checkpoint(format!("extra not UTF-8: {e}")))?;

    let count = cur.u32()? as usize;
    let mut tensors: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u16()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("name not UTF-8: {e}")))?;
        let rank = cur.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = cur.take(len * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if tensors.insert(name.clone(), (shape, data)).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {name:?}")));
        }
    }

    let mut model = DenseNet::<F>::build(config, 0)?;
    let mut missing = Vec::new();
    model.visit_params(&mut |name, p| {
        match tensors.remove(name) {
            Some((shape, data)) if shape == p.value.shape() => {
                for (dst, src) in p.value.data_mut().iter_mut().zip(data) {
                    *dst = F::from_f64(src as f64);
                }
            }
            Some((shape, _)) => missing.push(format!("{name}: shape {shape:?}")),
            None => missing.push(format!("{name}: absent")),
        }
    });
    if !missing.is_empty() {
        return Err(Error::Checkpoint(format!("mismatched tensors: {}", missing.join(", "))));
    }
    if !tensors.is_empty() {
        let extra_names: Vec<_> = tensors.keys().cloned().collect();
        return Err(Error::Checkpoint(format!("unknown tensors: {}", extra_names.join(", "))));
    }
    Ok((model, extra))
}
