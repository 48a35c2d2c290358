//! CVC1 covisibility matrices: magic, u32 n, then n² float32, little-endian.

use std::path::Path;

use cvforge_core::covis::CovisibilityMatrix;

use crate::error::{IoError, Result};
use crate::fsutil::{read_bytes, write_atomic};

pub const COVIS_MAGIC: &[u8; 4] = b"CVC1";
pub const MAX_COVIS_IMAGES: usize = 1 << 20;

pub fn covis_to_bytes(c: &CovisibilityMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * c.values.len());
    out.extend_from_slice(COVIS_MAGIC);
    out.extend_from_slice(&(c.n as u32).to_le_bytes());
    for v in &c.values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn write_covis(path: &Path, c: &CovisibilityMatrix) -> Result<()> {
    if c.n > MAX_COVIS_IMAGES {
        return Err(IoError::format(path, format!("{} images exceed the format limit", c.n)));
    }
    write_atomic(path, &covis_to_bytes(c))
}

pub fn read_covis(path: &Path) -> Result<CovisibilityMatrix> {
    let bytes = read_bytes(path)?;
    if bytes.len() < 8 {
        return Err(IoError::Truncated {
            path: path.to_path_buf(),
            expected: 8,
            found: bytes.len() as u64,
        });
    }
    if &bytes[..4] != COVIS_MAGIC {
        return Err(IoError::format(path, format!("bad magic {:?}", &bytes[..4])));
    }
    let n = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as u64;
    if n as usize > MAX_COVIS_IMAGES {
        return Err(IoError::format(path, format!("{n} images exceed the format limit")));
    }
    let expected = 8 + 4 * n * n;
    if bytes.len() as u64 != expected {
        return Err(IoError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() as u64,
        });
    }
    let values = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    CovisibilityMatrix::new(n as usize, values).map_err(|e| IoError::format(path, e.to_string()))
}
