//! Field checkpoints: a flat binary record of {dims, axis labels, row-major
//! samples} plus a JSON sidecar for metadata. Round-trips are bit-exact: the
//! payload is raw little-endian f64, and the sidecar's floats survive JSON via
//! shortest-round-trip formatting.

use crate::field::{RealField, SpectralField};
use crate::grid::Grid;
use crate::{CoreError, Result};
use ndarray::Array3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"SHLBFLD1";
const KIND_REAL: u8 = 0;
const KIND_COMPLEX: u8 = 1;

/// Sidecar metadata stored next to a field file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointMeta {
    pub time: f64,
    pub step: u64,
    pub version: String,
    #[serde(flatten, default)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl CheckpointMeta {
    pub fn new(time: f64, step: u64) -> Self {
        Self {
            time,
            step,
            version: crate::VERSION.to_string(),
            extra: serde_json::Map::new(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)
            .map_err(|e| CoreError::Checkpoint(format!("meta encode: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| CoreError::Checkpoint(format!("meta decode: {e}")))
    }
}

fn write_header(w: &mut impl Write, grid: &Grid, kind: u8) -> Result<()> {
    w.write_all(MAGIC)?;
    for &n in grid.dims().iter() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    w.write_all(b"xyz")?;
    w.write_all(&[kind])?;
    Ok(())
}

fn read_header(r: &mut impl Read) -> Result<(Grid, u8)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CoreError::Checkpoint("bad magic".into()));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        *d = u64::from_le_bytes(b) as usize;
    }
    let mut labels = [0u8; 3];
    r.read_exact(&mut labels)?;
    if &labels != b"xyz" {
        return Err(CoreError::Checkpoint("unexpected axis labels".into()));
    }
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    let grid = Grid::new(dims[0], dims[1], dims[2])?;
    Ok((grid, kind[0]))
}

/// Write real samples row-major in (x, y, z).
pub fn save_field(path: impl AsRef<Path>, field: &RealField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, field.grid(), KIND_REAL)?;
    for v in field.data().iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<RealField> {
    let mut r = BufReader::new(File::open(path)?);
    let (grid, kind) = read_header(&mut r)?;
    if kind != KIND_REAL {
        return Err(CoreError::Checkpoint("expected real payload".into()));
    }
    let d = grid.dims();
    let mut data = Array3::zeros((d[0], d[1], d[2]));
    for v in data.iter_mut() {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    RealField::new(grid, data)
}

/// Write complex coefficients (re, im interleaved), for solver state that is
/// not representable as real samples (e.g. single-sided mode content).
pub fn save_spectral(path: impl AsRef<Path>, field: &SpectralField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, field.grid(), KIND_COMPLEX)?;
    for v in field.data().iter() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_spectral(path: impl AsRef<Path>) -> Result<SpectralField> {
    let mut r = BufReader::new(File::open(path)?);
    let (grid, kind) = read_header(&mut r)?;
    if kind != KIND_COMPLEX {
        return Err(CoreError::Checkpoint("expected complex payload".into()));
    }
    let d = grid.dims();
    let mut data = Array3::zeros((d[0], d[1], d[2]));
    for v in data.iter_mut() {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let re = f64::from_le_bytes(b);
        r.read_exact(&mut b)?;
        let im = f64::from_le_bytes(b);
        *v = Complex64::new(re, im);
    }
    SpectralField::new(grid, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_field_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.fld");
        let grid = Grid::new(8, 16, 4).unwrap();
        let f = RealField::random_band_limited(grid, [3, 5, 1], 17);
        save_field(&path, &f).unwrap();
        let g = load_field(&path).unwrap();
        assert_eq!(g.grid(), f.grid());
        for (a, b) in f.data().iter().zip(g.data().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn spectral_field_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.spc");
        let grid = Grid::new(4, 8, 1).unwrap();
        let f = SpectralField::random_band_limited(grid, [1, 2, 0], 3);
        save_spectral(&path, &f).unwrap();
        let g = load_spectral(&path).unwrap();
        for (a, b) in f.data().iter().zip(g.data().iter()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn meta_preserves_floats_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.json");
        let mut meta = CheckpointMeta::new(0.1 + 0.2, 12345);
        meta.extra
            .insert("dt".into(), serde_json::json!(1.0e-3_f64 / 3.0));
        meta.save(&path).unwrap();
        let back = CheckpointMeta::load(&path).unwrap();
        assert_eq!(back.time.to_bits(), meta.time.to_bits());
        assert_eq!(back, meta);
    }
}
