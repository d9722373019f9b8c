//! Binary field dumps: a 64-byte little-endian header followed by the raw
//! `f64` values with `x1` running fastest.
//!
//! Header layout: magic `SFLB` (4 bytes), version `u32`, `N1, N2, N3` as
//! `u64`, `L1, L2, b` as `f64`, then 8 reserved zero bytes. Surface fields
//! are written with `N3 = 1`.
use super::field::{SurfaceField, VolumeField};
use super::grid::Grid;
use crate::error::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Array3};
use std::io::{Read, Write};

pub const MAGIC: &[u8; 4] = b"SFLB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DumpHeader {
    pub version: u32,
    pub n1: u64,
    pub n2: u64,
    pub n3: u64,
    pub l1: f64,
    pub l2: f64,
    pub b: f64,
}

impl DumpHeader {
    fn for_grid(grid: &Grid, n3: u64) -> Self {
        DumpHeader {
            version: VERSION,
            n1: grid.n1 as u64,
            n2: grid.n2 as u64,
            n3,
            l1: grid.l1,
            l2: grid.l2,
            b: grid.b,
        }
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(self.version)?;
        w.write_u64::<LittleEndian>(self.n1)?;
        w.write_u64::<LittleEndian>(self.n2)?;
        w.write_u64::<LittleEndian>(self.n3)?;
        w.write_f64::<LittleEndian>(self.l1)?;
        w.write_f64::<LittleEndian>(self.l2)?;
        w.write_f64::<LittleEndian>(self.b)?;
        w.write_all(&[0u8; 8])?;
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let h = DumpHeader {
            version,
            n1: r.read_u64::<LittleEndian>()?,
            n2: r.read_u64::<LittleEndian>()?,
            n3: r.read_u64::<LittleEndian>()?,
            l1: r.read_f64::<LittleEndian>()?,
            l2: r.read_f64::<LittleEndian>()?,
            b: r.read_f64::<LittleEndian>()?,
        };
        let mut reserved = [0u8; 8];
        r.read_exact(&mut reserved)?;
        Ok(h)
    }

    fn len(&self) -> usize {
        (self.n1 * self.n2 * self.n3) as usize
    }
}

fn write_values<'a, W: Write>(w: &mut W, vals: impl Iterator<Item = &'a f64>) -> Result<()> {
    for v in vals {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

fn read_values<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut out)?;
    Ok(out)
}

pub fn write_volume<W: Write>(w: &mut W, grid: &Grid, f: &VolumeField) -> Result<()> {
    DumpHeader::for_grid(grid, grid.n3 as u64).write(w)?;
    write_values(w, f.v.iter())
}

pub fn write_surface<W: Write>(w: &mut W, grid: &Grid, f: &SurfaceField) -> Result<()> {
    DumpHeader::for_grid(grid, 1).write(w)?;
    write_values(w, f.v.iter())
}

pub fn read_volume<R: Read>(r: &mut R) -> Result<(DumpHeader, VolumeField)> {
    let h = DumpHeader::read(r)?;
    let vals = read_values(r, h.len())?;
    let v = Array3::from_shape_vec((h.n3 as usize, h.n2 as usize, h.n1 as usize), vals)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok((h, VolumeField { v }))
}

pub fn read_surface<R: Read>(r: &mut R) -> Result<(DumpHeader, SurfaceField)> {
    let h = DumpHeader::read(r)?;
    if h.n3 != 1 {
        return Err(Error::Format(format!("expected a surface dump, N3 = {}", h.n3)));
    }
    let vals = read_values(r, h.len())?;
    let v = Array2::from_shape_vec((h.n2 as usize, h.n1 as usize), vals)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok((h, SurfaceField { v }))
}
