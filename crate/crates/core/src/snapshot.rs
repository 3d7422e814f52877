//! Binary field snapshots.
//!
//! Layout: magic `KGMF`, version byte 1, then little-endian u32 n, f64 L,
//! f64 ε, followed by n³ f64 values row-major over (i, j, k). Readers reject
//! mismatched magic or version, truncated payloads and trailing garbage.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::grid::{Field, TorusGrid};

const MAGIC: [u8; 4] = *b"KGMF";
const VERSION: u8 = 1;

/// Raw decoded snapshot, not yet attached to a grid.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub n: u32,
    pub length: f64,
    pub eps: f64,
    pub values: Vec<f64>,
}

impl Snapshot {
    /// Attach to an existing grid, rejecting size or length mismatches.
    pub fn into_field(self, grid: &Arc<TorusGrid>) -> Result<Field> {
        if self.n as usize != grid.n() {
            return Err(CoreError::Format(format!(
                "snapshot grid size {} does not match expected {}",
                self.n,
                grid.n()
            )));
        }
        if self.length != grid.length() {
            return Err(CoreError::Format(format!(
                "snapshot torus length {} does not match expected {}",
                self.length,
                grid.length()
            )));
        }
        Field::from_values(grid, self.values)
    }

    /// Build a fresh grid from the header and attach.
    pub fn into_field_with_grid(self) -> Result<(Field, f64)> {
        let grid = TorusGrid::new(self.n as usize, self.length)?;
        let eps = self.eps;
        Ok((self.into_field(&grid)?, eps))
    }
}

pub fn write_snapshot(u: &Field, eps: f64, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(u.grid().n() as u32).to_le_bytes())?;
    w.write_all(&u.grid().length().to_le_bytes())?;
    w.write_all(&eps.to_le_bytes())?;
    for v in u.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    read_exact_or_format(&mut r, &mut magic, "magic")?;
    if magic != MAGIC {
        return Err(CoreError::Format(format!(
            "bad magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let mut version = [0u8; 1];
    read_exact_or_format(&mut r, &mut version, "version")?;
    if version[0] != VERSION {
        return Err(CoreError::Format(format!(
            "unsupported version {}, expected {VERSION}",
            version[0]
        )));
    }

    let mut b4 = [0u8; 4];
    read_exact_or_format(&mut r, &mut b4, "grid size")?;
    let n = u32::from_le_bytes(b4);
    let mut b8 = [0u8; 8];
    read_exact_or_format(&mut r, &mut b8, "torus length")?;
    let length = f64::from_le_bytes(b8);
    read_exact_or_format(&mut r, &mut b8, "epsilon")?;
    let eps = f64::from_le_bytes(b8);

    if !(length > 0.0) || !length.is_finite() {
        return Err(CoreError::Format(format!("invalid torus length {length}")));
    }
    let count = (n as usize)
        .checked_pow(3)
        .ok_or_else(|| CoreError::Format(format!("grid size {n} overflows")))?;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        read_exact_or_format(&mut r, &mut b8, "field values")?;
        let v = f64::from_le_bytes(b8);
        if !v.is_finite() {
            return Err(CoreError::Format("non-finite field value".into()));
        }
        values.push(v);
    }
    // Strict framing: nothing may follow the payload.
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(CoreError::Format("trailing bytes after payload".into()));
    }
    Ok(Snapshot {
        n,
        length,
        eps,
        values,
    })
}

fn read_exact_or_format(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| CoreError::Format(format!("truncated while reading {what}")))
}
