//! The `EMB1` frame-matrix file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size   field
//! 0       4      magic "EMB1"
//! 4       4      layer (u32)
//! 8       4      T, number of frames (u32, > 0)
//! 12      4      D, embedding dimension (u32, > 0)
//! 16      4·T·D  f32 payload, row-major (frame 0 first)
//! ```
//!
//! The file length must be exactly `16 + 4·T·D`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const HEADER_LEN: usize = 16;

/// Hidden states of one layer for one utterance: `num_frames × dim`, stored
/// as on-disk `f32` values. Arithmetic on them happens in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    layer: u32,
    num_frames: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FrameMatrix {
    pub fn new(layer: u32, num_frames: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if num_frames == 0 || dim == 0 {
            return Err(Error::Validation(format!(
                "frame matrix must be non-empty, got {num_frames}x{dim}"
            )));
        }
        if num_frames > u32::MAX as usize || dim > u32::MAX as usize {
            return Err(Error::Validation("frame matrix dimensions exceed u32".into()));
        }
        if data.len() != num_frames * dim {
            return Err(Error::Validation(format!(
                "frame matrix data has {} values, expected {num_frames}x{dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at frame {}, dim {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(FrameMatrix {
            layer,
            num_frames,
            dim,
            data,
        })
    }

    /// Builds a matrix from `f64` rows, rounding each entry to `f32`.
    pub fn from_rows(layer: u32, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Validation("ragged rows".into()));
        }
        let data = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(layer, rows.len(), dim, data)
    }

    pub fn layer(&self) -> u32 {
        self.layer
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major values.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        &self.data[frame * self.dim..(frame + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.layer.to_le_bytes());
        out.extend_from_slice(&(self.num_frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "EMB1 file too short for header: {} bytes",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"EMB1\"",
                String::from_utf8_lossy(&bytes[..4])
            )));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let layer = word(4);
        let num_frames = word(8) as usize;
        let dim = word(12) as usize;
        let expected = num_frames
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::Format("EMB1 header dimensions overflow".into()))?;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "EMB1 header declares {num_frames}x{dim} ({expected} bytes) but file has {} bytes",
                bytes.len()
            )));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(layer, num_frames, dim, data).map_err(|e| match e {
            Error::Validation(msg) => Error::Format(msg),
            other => other,
        })
    }
}

pub fn write_frame_matrix(matrix: &FrameMatrix, path: &Path) -> Result<()> {
    fs::write(path, matrix.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_frame_matrix(path: &Path) -> Result<FrameMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FrameMatrix::decode(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_two_layout() {
        let m = FrameMatrix::new(0, 1, 2, vec![1.0, 2.0]).unwrap();
        let bytes = m.encode();
        assert_eq!(bytes.len(), 16 + 8);
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(&bytes[4..16], &[0, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(FrameMatrix::decode(&bytes).unwrap(), m);
    }

    #[test]
    fn zeros_file_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.emb");
        let m = FrameMatrix::new(3, 3, 4, vec![0.0; 12]).unwrap();
        write_frame_matrix(&m, &path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 16 + 48);
        assert_eq!(read_frame_matrix(&path).unwrap(), m);
    }

    #[test]
    fn nan_rejected() {
        let err = FrameMatrix::new(0, 1, 2, vec![1.0, f32::NAN]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let err = FrameMatrix::from_rows(0, &[vec![f64::INFINITY]]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = FrameMatrix::new(0, 1, 1, vec![1.0]).unwrap().encode();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(FrameMatrix::decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload() {
        // header claims 2x2 but only 3 floats follow
        let mut bytes = FrameMatrix::new(0, 2, 2, vec![1.0; 4]).unwrap().encode();
        bytes.truncate(16 + 12);
        assert!(matches!(FrameMatrix::decode(&bytes), Err(Error::Format(_))));
        // trailing garbage is also a size mismatch
        let mut bytes = FrameMatrix::new(0, 1, 1, vec![1.0]).unwrap().encode();
        bytes.push(0);
        assert!(matches!(FrameMatrix::decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn zero_sized_header_rejected() {
        let mut bytes = b"EMB1".to_vec();
        bytes.extend_from_slice(&[0; 12]);
        assert!(matches!(FrameMatrix::decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_frame_matrix(Path::new("/nonexistent/x.emb")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
