//! Binary field files.
//!
//! Layout, all little-endian: the magic `LSF1`, `nx ny nz` as `u32`,
//! `dx dy dz` as `f64`, then `nx·ny·nz` `f64` values with x varying fastest.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, ScalarField};

pub const MAGIC: &[u8; 4] = b"LSF1";
pub const HEADER_LEN: usize = 4 + 3 * 4 + 3 * 8;

pub fn encode(field: &ScalarField) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * g.len());
    out.extend_from_slice(MAGIC);
    for n in g.extents() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for h in g.spacing() {
        out.extend_from_slice(&h.to_le_bytes());
    }
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ScalarField> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::FieldFile(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::FieldFile("bad magic, expected LSF1".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let n = [u32_at(4), u32_at(8), u32_at(12)];
    let h = [f64_at(16), f64_at(24), f64_at(32)];
    for a in 0..3 {
        if !((h[a] * n[a] as f64 - 1.0).abs() <= 1e-12) {
            return Err(Error::FieldFile(format!(
                "spacing {} times extent {} does not span the unit cell",
                h[a], n[a]
            )));
        }
    }
    let grid = PeriodicGrid::new(n[0], n[1], n[2]).map_err(|e| Error::FieldFile(e.to_string()))?;
    let expected = HEADER_LEN + 8 * grid.len();
    if bytes.len() != expected {
        return Err(Error::FieldFile(format!(
            "payload length mismatch: {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ScalarField::from_values(grid, values)
}

pub fn write_field(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    fs::write(path, encode(field))?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    decode(&fs::read(path)?)
}
