//! Readers and writers for every on-disk artifact.
//!
//! Binary formats are little-endian throughout. Parsers check every declared
//! length against the bytes actually present before reading, and report the
//! byte offset at which a problem was found.

use std::fs;
use std::path::Path;

use thiserror::Error;

pub mod csv_rows;
pub mod grid;
pub mod intrinsics;
pub mod ply;
pub mod png16;
pub mod rimg;
pub mod trajectory;

pub use csv_rows::{read_csv, write_csv, ReconstructionRow, RegistrationRow};
pub use grid::{decode_grid, encode_grid, read_grid, write_grid};
pub use intrinsics::{intrinsics_from_json, intrinsics_to_json, read_intrinsics, write_intrinsics};
pub use ply::{decode_ply, encode_ply, encode_point_cloud_ply, read_ply, write_ply};
pub use png16::{decode_png16, encode_png16, read_png16, write_png16};
pub use rimg::{decode_rimg, encode_rimg, read_rimg, read_rimg_for, write_rimg};
pub use trajectory::{
    format_trajectory, parse_trajectory, read_trajectory, write_trajectory, OrthonormalityPolicy,
    TrajectoryEntry,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("bad magic at offset 0: expected {expected:?}, found {found:?}")]
    MagicMismatch { expected: String, found: String },

    #[error(
        "truncated payload at byte offset {offset}: needed {needed} bytes, {available} available"
    )]
    TruncatedPayload {
        offset: u64,
        needed: u64,
        available: u64,
    },

    #[error("non-finite value at byte offset {offset}")]
    NonFinite { offset: u64 },

    #[error("parse error at line {line}, byte offset {offset}: {message}")]
    Parse {
        line: usize,
        offset: u64,
        message: String,
    },

    #[error("dimension mismatch: expected {expected:?} (rows, cols), found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl FormatError {
    pub fn kind(&self) -> &'static str {
        match self {
            FormatError::MagicMismatch { .. } => "magic_mismatch",
            FormatError::TruncatedPayload { .. } => "truncated_payload",
            FormatError::NonFinite { .. } => "non_finite",
            FormatError::Parse { .. } => "parse",
            FormatError::DimensionMismatch { .. } => "dimension_mismatch",
            FormatError::Unsupported(_) => "unsupported",
        }
    }

    /// Parse error in a binary stream (no line number).
    pub(crate) fn at(offset: usize, message: impl Into<String>) -> Self {
        FormatError::Parse {
            line: 0,
            offset: offset as u64,
            message: message.into(),
        }
    }
}

/// Bounds-checked little-endian cursor.
pub(crate) struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    /// Fails unless `n` more bytes are present, without consuming them.
    pub(crate) fn require(&self, n: u64) -> Result<(), FormatError> {
        if (self.remaining() as u64) < n {
            return Err(FormatError::TruncatedPayload {
                offset: self.pos as u64,
                needed: n,
                available: self.remaining() as u64,
            });
        }
        Ok(())
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        self.require(n as u64)?;
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        Ok(self.take(N)?.try_into().expect("slice has length N"))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn i32(&mut self) -> Result<i32, FormatError> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub(crate) fn f32_finite(&mut self) -> Result<f32, FormatError> {
        let at = self.pos;
        let v = f32::from_le_bytes(self.array()?);
        if !v.is_finite() {
            return Err(FormatError::NonFinite { offset: at as u64 });
        }
        Ok(v)
    }

    pub(crate) fn f64_finite(&mut self) -> Result<f64, FormatError> {
        let at = self.pos;
        let v = f64::from_le_bytes(self.array()?);
        if !v.is_finite() {
            return Err(FormatError::NonFinite { offset: at as u64 });
        }
        Ok(v)
    }

    pub(crate) fn expect_end(&self) -> Result<(), FormatError> {
        if self.remaining() != 0 {
            return Err(FormatError::at(
                self.pos,
                format!("{} trailing bytes after payload", self.remaining()),
            ));
        }
        Ok(())
    }
}

pub(crate) fn read_bytes(path: &Path) -> crate::Result<Vec<u8>> {
    Ok(fs::read(path)?)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> crate::Result<()> {
    Ok(fs::write(path, bytes)?)
}

/// Reads a scene description (JSON list of primitives).
pub fn read_scene(path: &Path) -> crate::Result<crate::synth::Scene> {
    let text = fs::read_to_string(path)?;
    let scene: crate::synth::Scene =
        serde_json::from_str(&text).map_err(|e| json_error(&text, &e))?;
    scene.validate()?;
    Ok(scene)
}

pub(crate) fn json_error(text: &str, e: &serde_json::Error) -> FormatError {
    let offset: usize = text
        .split_inclusive('\n')
        .take(e.line().saturating_sub(1))
        .map(str::len)
        .sum::<usize>()
        + e.column().saturating_sub(1);
    FormatError::Parse {
        line: e.line(),
        offset: offset as u64,
        message: e.to_string(),
    }
}

/// Reads an unorganized point cloud: `.ply` (vertices only are used) or
/// KITTI-style `.bin` (little-endian f32 quadruples x, y, z, intensity).
pub fn read_point_cloud(path: &Path) -> crate::Result<Vec<crate::transform::Point3>> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "ply" => Ok(read_ply(path)?.vertices),
        "bin" => Ok(decode_kitti_bin(&read_bytes(path)?)?),
        other => Err(FormatError::Unsupported(format!("point cloud extension {other:?}")).into()),
    }
}

pub fn decode_kitti_bin(bytes: &[u8]) -> Result<Vec<crate::transform::Point3>, FormatError> {
    if !bytes.len().is_multiple_of(16) {
        let whole = bytes.len() - bytes.len() % 16;
        return Err(FormatError::TruncatedPayload {
            offset: whole as u64,
            needed: 16,
            available: (bytes.len() - whole) as u64,
        });
    }
    let mut r = ByteReader::new(bytes);
    let mut out = Vec::with_capacity(bytes.len() / 16);
    while r.remaining() > 0 {
        let x = r.f32_finite()? as f64;
        let y = r.f32_finite()? as f64;
        let z = r.f32_finite()? as f64;
        r.take(4)?;
        out.push(crate::transform::Point3::new(x, y, z));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reader_reports_offsets() {
        let bytes = [1u8, 0, 0, 0, 9];
        let mut r = ByteReader::new(&bytes);
        assert_eq!(r.u32().unwrap(), 1);
        assert_eq!(
            r.u32(),
            Err(FormatError::TruncatedPayload {
                offset: 4,
                needed: 4,
                available: 1
            })
        );
        let nan = f32::NAN.to_le_bytes();
        assert_eq!(
            ByteReader::new(&nan).f32_finite(),
            Err(FormatError::NonFinite { offset: 0 })
        );
    }

    #[test]
    fn kitti_bin_layout() {
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 0.5, -1.0, 0.0, 4.0, 0.1] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let pts = decode_kitti_bin(&bytes).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1], crate::transform::Point3::new(-1.0, 0.0, 4.0));
        assert!(matches!(
            decode_kitti_bin(&bytes[..20]),
            Err(FormatError::TruncatedPayload { offset: 16, .. })
        ));
    }
}
