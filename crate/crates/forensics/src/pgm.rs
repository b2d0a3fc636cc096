//! Minimal binary PGM (P5) reader/writer for masks and heatmaps.

use crate::{Error, Result};
use std::io::Write;
use std::path::Path;

pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, data: &[u8]) -> Result<()> {
    assert_eq!(data.len(), width * height);
    let mut file = std::fs::File::create(path)?;
    write!(file, "P5\n{width} {height}\n255\n")?;
    file.write_all(data)?;
    Ok(())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    let mut pos = 0usize;

    let mut token = |bytes: &[u8]| -> Result<String> {
        // skip whitespace and # comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("pgm: unexpected end of header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token(&bytes)? != "P5" {
        return Err(Error::Format("pgm: not a P5 file".into()));
    }
    let width: usize =
        token(&bytes)?.parse().map_err(|e| Error::Format(format!("pgm width: {e}")))?;
    let height: usize =
        token(&bytes)?.parse().map_err(|e| Error::Format(format!("pgm height: {e}")))?;
    let maxval: usize =
        token(&bytes)?.parse().map_err(|e| Error::Format(format!("pgm maxval: {e}")))?;
    if maxval != 255 {
        return Err(Error::Format(format!("pgm: unsupported maxval {maxval}")));
    }
    pos += 1; // single whitespace after maxval
    if bytes.len() < pos + width * height {
        return Err(Error::Format("pgm: pixel data truncated".into()));
    }
    Ok((width, height, bytes[pos..pos + width * height].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = std::env::temp_dir().join(format!("requant-pgm-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.pgm");
        let data: Vec<u8> = (0..12).map(|v| (v * 20) as u8).collect();
        write_pgm(&path, 4, 3, &data).unwrap();
        let (w, h, back) = read_pgm(&path).unwrap();
        std::fs::remove_dir_all(&dir).unwrap();
        assert_eq!((w, h), (4, 3));
        assert_eq!(back, data);
    }
}
