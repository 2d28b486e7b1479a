//! RDTF binary snapshots.
//!
//! Layout (little-endian): `"RDTF"`, u32 version (= 1), u32 n, u32 resolution,
//! f64 box_length, f64 time, u32 component_count, then
//! `component_count × resolutionⁿ` f64 values, component-major, grid points
//! row-major.

use std::path::Path;

use super::{GridSpec, SymTensorField};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RDTF";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 8 + 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub grid: GridSpec,
    pub time: f64,
    pub comps: Vec<Vec<f64>>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format(format!("truncated at byte {} of {}", self.pos, self.bytes.len())))?;
        self.pos = end;
        Ok(chunk.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

impl Snapshot {
    pub fn from_field(h: &SymTensorField, time: f64) -> Self {
        Self { grid: *h.grid(), time, comps: h.comps().to_vec() }
    }

    pub fn to_field(&self) -> Result<SymTensorField> {
        SymTensorField::new(self.grid, self.comps.clone())
    }

    pub fn encode(&self) -> Vec<u8> {
        let values = self.comps.len() * self.grid.len();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * values);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.grid.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.grid.resolution() as u32).to_le_bytes());
        out.extend_from_slice(&self.grid.box_length().to_le_bytes());
        out.extend_from_slice(&self.time.to_le_bytes());
        out.extend_from_slice(&(self.comps.len() as u32).to_le_bytes());
        for comp in &self.comps {
            for v in comp {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if &r.take::<4>()? != MAGIC {
            return Err(Error::Format("bad magic, expected RDTF".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let n = r.u32()? as usize;
        let resolution = r.u32()? as usize;
        let box_length = r.f64()?;
        let grid = GridSpec::new(n, resolution, box_length).map_err(|e| Error::Format(e.to_string()))?;
        let time = r.f64()?;
        let count = r.u32()? as usize;
        let expected = HEADER_LEN + 8 * count * grid.len();
        if bytes.len() != expected {
            return Err(Error::Format(format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let mut comps = Vec::with_capacity(count);
        for _ in 0..count {
            comps.push((0..grid.len()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
        }
        Ok(Self { grid, time, comps })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}
