//! `SPQG` binary snapshots and the key=value metadata sidecar.
//!
//! Layout (all little-endian): magic `SPQG`, version `u32`, dim `u32`,
//! points per axis `u32 × dim`, box length per axis `f64 × dim`,
//! component count `u32`, then `(re, im)` `f64` pairs with components
//! outermost and wavevectors in row-major FFT order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::BoxGrid;

pub const MAGIC: &[u8; 4] = b"SPQG";
pub const VERSION: u32 = 1;

pub fn write_snapshot<W: Write>(out: &mut W, f: &SpectralField) -> Result<()> {
    let grid = f.grid();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(grid.dim() as u32).to_le_bytes())?;
    for &n in grid.points() {
        out.write_all(&(n as u32).to_le_bytes())?;
    }
    for &l in grid.lengths() {
        out.write_all(&l.to_le_bytes())?;
    }
    out.write_all(&(f.components() as u32).to_le_bytes())?;
    for c in 0..f.components() {
        for v in f.component(c) {
            out.write_all(&v.re.to_le_bytes())?;
            out.write_all(&v.im.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_snapshot<R: Read>(input: &mut R) -> Result<SpectralField> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Snapshot(format!("bad magic {magic:?}")));
    }
    let version = read_u32(input)?;
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let dim = read_u32(input)? as usize;
    if !(dim == 2 || dim == 3) {
        return Err(Error::Snapshot(format!("unsupported dimension {dim}")));
    }
    let points = (0..dim)
        .map(|_| read_u32(input).map(|n| n as usize))
        .collect::<Result<Vec<_>>>()?;
    let lengths = (0..dim).map(|_| read_f64(input)).collect::<Result<Vec<_>>>()?;
    let grid = BoxGrid::new(&points, &lengths)?;
    let ncomp = read_u32(input)? as usize;
    if ncomp == 0 {
        return Err(Error::Snapshot("zero components".into()));
    }
    let mut comps = Vec::with_capacity(ncomp);
    for _ in 0..ncomp {
        let mut c = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let re = read_f64(input)?;
            let im = read_f64(input)?;
            c.push(Complex64::new(re, im));
        }
        comps.push(c);
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(Error::Snapshot("trailing bytes after coefficients".into()));
    }
    SpectralField::from_components(grid, comps)
}

pub fn save(path: &Path, f: &SpectralField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_snapshot(&mut w, f)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<SpectralField> {
    read_snapshot(&mut BufReader::new(File::open(path)?))
}

/// Flat `key=value` sidecar, one entry per line, in the given order.
pub fn write_metadata(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (k, v) in entries {
        writeln!(w, "{k}={v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metadata(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Snapshot(format!("malformed metadata line {l:?}")))
        })
        .collect()
}
