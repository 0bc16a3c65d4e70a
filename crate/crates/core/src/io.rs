//! Binary field dumps and CSV output.
//!
//! The dump layout is little-endian: the magic `EKA1`, `u32 nx`, `u32 ny`,
//! `f64 Lx`, `f64 Ly`, then `nx * ny` row-major `f64` samples. Layer dumps
//! insert `u32 nz` and the `nz` layer nodes after the header and store
//! `nz` slices.

use crate::column::ColumnField;
use crate::error::{Error, Result};
use crate::spectral::{Field2, Grid2D};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"EKA1";

pub fn encode_dump(f: &Field2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + 8 * f.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(f.grid.nx as u32).to_le_bytes());
    out.extend_from_slice(&(f.grid.ny as u32).to_le_bytes());
    out.extend_from_slice(&f.grid.lx.to_le_bytes());
    out.extend_from_slice(&f.grid.ly.to_le_bytes());
    for v in &f.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_dump(bytes: &[u8]) -> Result<Field2<f64>> {
    if bytes.len() < 28 {
        return Err(Error::Format(format!("header truncated: {} bytes", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (nx, ny) = (u32_at(4), u32_at(8));
    let grid = Grid2D::new(nx, ny, f64_at(12), f64_at(20))?;
    let want = 28 + 8 * nx * ny;
    if bytes.len() != want {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header implies {}",
            bytes.len(),
            want
        )));
    }
    let data: Vec<f64> = (0..nx * ny).map(|k| f64_at(28 + 8 * k)).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dump payload".into()));
    }
    Field2::from_vec(grid, data)
}

pub fn encode_layer_dump(f: &ColumnField<f64>, z: &[f64]) -> Vec<u8> {
    assert_eq!(z.len(), f.n, "node count must match the slices");
    let mut out = encode_dump(&Field2::zeros(f.grid));
    out.truncate(28);
    out.extend_from_slice(&(f.n as u32).to_le_bytes());
    for v in z.iter().chain(&f.data) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_layer_dump(bytes: &[u8]) -> Result<(ColumnField<f64>, Vec<f64>)> {
    if bytes.len() < 32 {
        return Err(Error::Format(format!("layer header truncated: {} bytes", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let grid = Grid2D::new(u32_at(4), u32_at(8), f64_at(12), f64_at(20))?;
    let nz = u32_at(28);
    let want = 32 + 8 * nz * (1 + grid.len());
    if bytes.len() != want {
        return Err(Error::Format(format!("payload holds {} bytes, header implies {}", bytes.len(), want)));
    }
    let z: Vec<f64> = (0..nz).map(|k| f64_at(32 + 8 * k)).collect();
    let o = 32 + 8 * nz;
    let mut f = ColumnField::zeros(grid, nz);
    for (k, v) in f.data.iter_mut().enumerate() {
        *v = f64_at(o + 8 * k);
    }
    if f.data.iter().chain(&z).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("layer dump payload".into()));
    }
    Ok((f, z))
}

pub fn write_dump(path: &Path, f: &Field2<f64>) -> Result<()> {
    std::fs::File::create(path)?.write_all(&encode_dump(f))?;
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<Field2<f64>> {
    let mut b = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut b)?;
    decode_dump(&b)
}

/// `x,y,value` rows, one per grid point.
pub fn field_csv(f: &Field2<f64>) -> String {
    let mut s = String::from("x,y,value\n");
    let g = f.grid;
    for j in 0..g.ny {
        for i in 0..g.nx {
            s.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", g.x(i), g.y(j), f.at(i, j)));
        }
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}
