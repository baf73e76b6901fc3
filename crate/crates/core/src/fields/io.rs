//! Binary field format: little-endian IEEE-754 `(re, im)` pairs in row-major
//! order, plus a JSON sidecar (`<name>.json`) holding the grid and a SHA-256
//! checksum of the binary payload.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::grid::{Field, Grid};
use crate::{Error, Result};

pub const FORMAT: &str = "schrocurve-field-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub format: String,
    pub dim: usize,
    pub n: usize,
    pub half_width: f64,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn encode(field: &Field) -> Vec<u8> {
    let mut out = Vec::with_capacity(field.values().len() * 16);
    for v in field.values() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

pub fn decode(grid: Grid, bytes: &[u8]) -> Result<Field> {
    if bytes.len() != grid.len() * 16 {
        return Err(Error::InvalidGrid(format!(
            "payload has {} bytes, expected {}",
            bytes.len(),
            grid.len() * 16
        )));
    }
    let values = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    Field::from_values(grid, values)
}

pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Writes `<path>` and its sidecar; returns the payload checksum.
pub fn write_field(path: &Path, field: &Field) -> Result<String> {
    let bytes = encode(field);
    let checksum = sha256_hex(&bytes);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, &bytes)?;
    let g = field.grid();
    let sidecar = FieldSidecar {
        format: FORMAT.to_string(),
        dim: g.dim(),
        n: g.n(),
        half_width: g.half_width(),
        sha256: checksum.clone(),
    };
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(checksum)
}

/// Reads a field, verifying the payload against its sidecar checksum.
pub fn read_field(path: &Path) -> Result<Field> {
    let sidecar: FieldSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    let bytes = fs::read(path)?;
    let found = sha256_hex(&bytes);
    if found != sidecar.sha256 {
        return Err(Error::Checksum {
            path: path.display().to_string(),
            expected: sidecar.sha256,
            found,
        });
    }
    decode(Grid::new(sidecar.dim, sidecar.n, sidecar.half_width)?, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(2, 8, 3.0).unwrap();
        let f = Field::from_fn(g, |x| Complex64::new(x[0], -x[1] * 0.5));
        let path = dir.path().join("f.bin");
        let sum = write_field(&path, &f).unwrap();
        assert_eq!(sum.len(), 64);
        assert_eq!(read_field(&path).unwrap(), f);

        let mut bytes = fs::read(&path).unwrap();
        bytes[3] ^= 1;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_field(&path), Err(Error::Checksum { .. })));
    }

    #[test]
    fn layout_is_little_endian_pairs() {
        let g = Grid::new(1, 8, 1.0).unwrap();
        let mut f = Field::zeros(g);
        f.values_mut()[1] = Complex64::new(1.0, -2.0);
        let b = encode(&f);
        assert_eq!(&b[16..24], &1.0f64.to_le_bytes());
        assert_eq!(&b[24..32], &(-2.0f64).to_le_bytes());
    }
}
