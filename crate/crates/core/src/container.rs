//! Typed binary container for fitted models and cached tables, with a JSON
//! metadata sidecar next to it (same path, `.json` extension).
//!
//! Layout (little-endian):
//!
//! ```text
//! 0   4   type tag, e.g. "PROJ", "PROB", "SEGT"
//! 4   4   number of blocks (u32)
//! then per block:
//!     4   rows (u32)
//!     4   cols (u32)
//!     8·rows·cols  f64 payload, row-major
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg::{Convergence, FitConfig, ProbeModel, Projection, ProjectionKind};
use crate::store::{SegmentMeta, SegmentTable, Tier};

pub const TAG_PROJECTION: [u8; 4] = *b"PROJ";
pub const TAG_PROBE: [u8; 4] = *b"PROB";
pub const TAG_SEGMENT_TABLE: [u8; 4] = *b"SEGT";

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub tag: [u8; 4],
    pub blocks: Vec<DMatrix<f64>>,
}

impl Container {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.tag);
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            out.extend_from_slice(&(b.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(b.ncols() as u32).to_le_bytes());
            for r in 0..b.nrows() {
                for c in 0..b.ncols() {
                    out.extend_from_slice(&b[(r, c)].to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cursor.len() < n {
                return Err(Error::Format("container truncated".into()));
            }
            let (head, rest) = cursor.split_at(n);
            cursor = rest;
            Ok(head)
        };
        let tag: [u8; 4] = take(4)?.try_into().unwrap();
        if !tag.iter().all(u8::is_ascii_alphanumeric) {
            return Err(Error::Format(format!("invalid container tag {tag:?}")));
        }
        let word = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
        let count = word(take(4)?);
        // every block has an 8-byte shape header
        if count > (bytes.len() - 8) / 8 {
            return Err(Error::Format(format!("container declares {count} blocks in {} bytes", bytes.len())));
        }
        let mut blocks = Vec::with_capacity(count);
        for _ in 0..count {
            let rows = word(take(4)?);
            let cols = word(take(4)?);
            let len = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| Error::Format("container block size overflows".into()))?;
            let payload = take(len)?;
            let values: Vec<f64> = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            blocks.push(DMatrix::from_row_slice(rows, cols, &values));
        }
        if !cursor.is_empty() {
            return Err(Error::Format(format!(
                "{} trailing bytes after container blocks",
                cursor.len()
            )));
        }
        Ok(Container { tag, blocks })
    }

    fn expect(self, tag: [u8; 4], blocks: usize) -> Result<Vec<DMatrix<f64>>> {
        if self.tag != tag {
            return Err(Error::Format(format!(
                "container tag {:?}, expected {:?}",
                String::from_utf8_lossy(&self.tag),
                String::from_utf8_lossy(&tag)
            )));
        }
        if self.blocks.len() != blocks {
            return Err(Error::Format(format!(
                "container has {} blocks, expected {blocks}",
                self.blocks.len()
            )));
        }
        Ok(self.blocks)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn write_pair<M: Serialize>(path: &Path, container: &Container, meta: &M) -> Result<()> {
    fs::write(path, container.encode()).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::Format(format!("serialize sidecar: {e}")))?;
    fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))
}

fn read_pair<M: DeserializeOwned>(path: &Path) -> Result<(Container, M)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let container = Container::decode(&bytes)?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", side.display())))?;
    Ok((container, meta))
}

fn row_block(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v.as_slice())
}

fn vector_of(m: &DMatrix<f64>, len: usize, what: &str) -> Result<DVector<f64>> {
    if m.nrows() != 1 || m.ncols() != len {
        return Err(Error::Format(format!(
            "{what} block is {}x{}, expected 1x{len}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(DVector::from_iterator(len, m.iter().copied()))
}

#[derive(Serialize, Deserialize)]
struct ProjectionSidecar {
    kind: ProjectionKind,
    dim: usize,
    k: usize,
    eigenvalues: Vec<f64>,
    eigenvalue_total: f64,
    warnings: Vec<String>,
    #[serde(default)]
    metadata: Value,
}

/// Writes `p` with caller-supplied metadata (seeds, hyperparameters, …).
pub fn save_projection(p: &Projection, metadata: Value, path: &Path) -> Result<()> {
    let container = Container {
        tag: TAG_PROJECTION,
        blocks: vec![row_block(&p.mean), p.basis.clone()],
    };
    let side = ProjectionSidecar {
        kind: p.kind,
        dim: p.dim(),
        k: p.k(),
        eigenvalues: p.eigenvalues.clone(),
        eigenvalue_total: p.eigenvalue_total,
        warnings: p.warnings.clone(),
        metadata,
    };
    write_pair(path, &container, &side)
}

pub fn load_projection(path: &Path) -> Result<Projection> {
    let (container, side): (Container, ProjectionSidecar) = read_pair(path)?;
    let mut blocks = container.expect(TAG_PROJECTION, 2)?;
    let basis = blocks.pop().unwrap();
    let mean = vector_of(&blocks[0], side.dim, "mean")?;
    if basis.shape() != (side.dim, side.k) || side.eigenvalues.len() != side.k {
        return Err(Error::Format("projection blocks disagree with sidecar".into()));
    }
    Ok(Projection {
        kind: side.kind,
        mean,
        basis,
        eigenvalues: side.eigenvalues,
        eigenvalue_total: side.eigenvalue_total,
        warnings: side.warnings,
    })
}

#[derive(Serialize, Deserialize)]
struct ProbeSidecar {
    classes: Vec<String>,
    dim: usize,
    convergence: Convergence,
    fit_config: FitConfig,
    #[serde(default)]
    metadata: Value,
}

pub fn save_probe(m: &ProbeModel, cfg: &FitConfig, metadata: Value, path: &Path) -> Result<()> {
    let container = Container {
        tag: TAG_PROBE,
        blocks: vec![
            m.weights.clone(),
            row_block(&m.bias),
            row_block(&m.feature_mean),
            row_block(&m.feature_scale),
        ],
    };
    let side = ProbeSidecar {
        classes: m.classes.clone(),
        dim: m.dim(),
        convergence: m.convergence,
        fit_config: *cfg,
        metadata,
    };
    write_pair(path, &container, &side)
}

pub fn load_probe(path: &Path) -> Result<ProbeModel> {
    let (container, side): (Container, ProbeSidecar) = read_pair(path)?;
    let blocks = container.expect(TAG_PROBE, 4)?;
    let c = side.classes.len();
    if blocks[0].shape() != (c, side.dim) {
        return Err(Error::Format("probe weights disagree with sidecar".into()));
    }
    Ok(ProbeModel {
        weights: blocks[0].clone(),
        bias: vector_of(&blocks[1], c, "bias")?,
        feature_mean: vector_of(&blocks[2], side.dim, "feature mean")?,
        feature_scale: vector_of(&blocks[3], side.dim, "feature scale")?,
        classes: side.classes,
        convergence: side.convergence,
    })
}

#[derive(Serialize, Deserialize)]
struct TableSidecar {
    tier: Tier,
    layer: u32,
    dim: usize,
    input_hash: String,
    rows: Vec<SegmentMeta>,
}

/// Caches a pooled table together with the hash of the inputs it came from.
pub fn save_segment_table(table: &SegmentTable, input_hash: &str, path: &Path) -> Result<()> {
    let container = Container {
        tag: TAG_SEGMENT_TABLE,
        blocks: vec![DMatrix::from_row_slice(table.len(), table.dim(), table.raw_data())],
    };
    let side = TableSidecar {
        tier: table.tier(),
        layer: table.layer(),
        dim: table.dim(),
        input_hash: input_hash.to_string(),
        rows: table.rows().to_vec(),
    };
    write_pair(path, &container, &side)
}

/// Loads a cached table and the input hash recorded with it.
pub fn load_segment_table(path: &Path) -> Result<(SegmentTable, String)> {
    let (container, side): (Container, TableSidecar) = read_pair(path)?;
    let blocks = container.expect(TAG_SEGMENT_TABLE, 1)?;
    let m = &blocks[0];
    if m.nrows() != side.rows.len() || (m.nrows() > 0 && m.ncols() != side.dim) {
        return Err(Error::Format("cached table blocks disagree with sidecar".into()));
    }
    let data: Vec<f64> = m.transpose().iter().copied().collect();
    let table = SegmentTable::new(side.tier, side.layer, side.dim, side.rows, data)?;
    Ok((table, side.input_hash))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fit_logreg, fit_pca};

    #[test]
    fn container_roundtrip_and_errors() {
        let c = Container {
            tag: TAG_PROJECTION,
            blocks: vec![DMatrix::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 6.]), DMatrix::zeros(0, 4)],
        };
        let bytes = c.encode();
        assert_eq!(bytes.len(), 8 + 8 + 48 + 8);
        assert_eq!(Container::decode(&bytes).unwrap(), c);
        assert!(Container::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Container::decode(&extra).is_err());
        assert!(Container::decode(b"\0\0\0\0\0\0\0\0").is_err());
        assert!(Container::decode(b"PROJ\xff\xff\xff\xff").is_err());
    }

    #[test]
    fn projection_and_probe_files() {
        let dir = tempfile::tempdir().unwrap();
        let x = DMatrix::from_fn(30, 3, |r, c| ((r * 7 + c * 5) % 11) as f64 + c as f64);
        let p = fit_pca(&x, 2).unwrap();
        let path = dir.path().join("pca.bin");
        save_projection(&p, serde_json::json!({"seed": 1}), &path).unwrap();
        assert_eq!(load_projection(&path).unwrap(), p);

        let y: Vec<&str> = (0..30).map(|r| if r % 2 == 0 { "a" } else { "b" }).collect();
        let cfg = FitConfig::default();
        let m = fit_logreg(&x, &y, &cfg).unwrap();
        let path = dir.path().join("probe.bin");
        save_probe(&m, &cfg, Value::Null, &path).unwrap();
        assert_eq!(load_probe(&path).unwrap(), m);
        assert!(load_projection(&path).is_err());
    }
}
