//! Binary container for gridded fields.
//!
//! Layout (little-endian): magic `HUSF`, `u32` version, `u32 nx`, `u32 ny`,
//! `f64 xmin, xmax, ymin, ymax`, `u8` domain tag, then `nx * ny` values in
//! row-major order with `x` fastest. Empty cells are NaN.

use std::path::Path;

use fput::classical::SosGrid;
use fput::husimi::{FieldKind, HusimiField};
use fput::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HUSF";
pub const VERSION: u32 = 1;
/// Bytes before the payload.
pub const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 4 * 8 + 1;

/// Coordinates of the grid axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// Surface of section `(q2, p2)` at `q1 = 0`.
    Sos,
    /// Configuration space `(q1, q2)`.
    Config,
    /// Phase space of the second mode `(q2, p2)`.
    Phase,
}

impl Domain {
    pub fn tag(self) -> u8 {
        match self {
            Domain::Sos => 0,
            Domain::Config => 1,
            Domain::Phase => 2,
        }
    }

    pub fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(Domain::Sos),
            1 => Ok(Domain::Config),
            2 => Ok(Domain::Phase),
            _ => Err(Error::Format(format!("unknown domain tag {t}"))),
        }
    }

    pub fn axis_labels(self) -> (&'static str, &'static str) {
        match self {
            Domain::Sos | Domain::Phase => ("q2", "p2"),
            Domain::Config => ("q1", "q2"),
        }
    }

    pub fn of_kind(kind: FieldKind) -> Self {
        match kind {
            FieldKind::Qsos => Domain::Sos,
            FieldKind::Complete | FieldKind::Shell => Domain::Phase,
            FieldKind::Config => Domain::Config,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldFile {
    pub nx: u32,
    pub ny: u32,
    pub bounds: (f64, f64, f64, f64),
    pub domain: Domain,
    /// Row-major, NaN for empty cells.
    pub values: Vec<f64>,
}

impl FieldFile {
    pub fn from_grid(grid: &SosGrid, domain: Domain) -> Result<Self> {
        let nx = u32::try_from(grid.nx).map_err(|_| Error::Format("grid too wide".into()))?;
        let ny = u32::try_from(grid.ny).map_err(|_| Error::Format("grid too tall".into()))?;
        Ok(FieldFile { nx, ny, bounds: grid.bounds, domain, values: grid.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect() })
    }

    pub fn from_field(field: &HusimiField) -> Result<Self> {
        Self::from_grid(&field.grid, Domain::of_kind(field.kind))
    }

    pub fn to_grid(&self) -> SosGrid {
        SosGrid {
            bounds: self.bounds,
            nx: self.nx as usize,
            ny: self.ny as usize,
            values: self.values.iter().map(|&v| if v.is_nan() { None } else { Some(v) }).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.nx.to_le_bytes());
        out.extend_from_slice(&self.ny.to_le_bytes());
        for b in [self.bounds.0, self.bounds.1, self.bounds.2, self.bounds.3] {
            out.extend_from_slice(&b.to_le_bytes());
        }
        out.push(self.domain.tag());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a field file".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported field file version {version}")));
        }
        let (nx, ny) = (u32_at(8), u32_at(12));
        let bounds = (f64_at(16), f64_at(24), f64_at(32), f64_at(40));
        let domain = Domain::from_tag(bytes[48])?;
        let n = nx as usize * ny as usize;
        if bytes.len() != HEADER_LEN + 8 * n {
            return Err(Error::Format(format!(
                "field file holds {} bytes, expected {} for a {nx} x {ny} grid",
                bytes.len(),
                HEADER_LEN + 8 * n
            )));
        }
        let values = (0..n).map(|k| f64_at(HEADER_LEN + 8 * k)).collect();
        Ok(FieldFile { nx, ny, bounds, domain, values })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&crate::read_bytes(path)?)
    }
}
