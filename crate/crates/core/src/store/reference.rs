use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::frame::{read_frame_matrix, FrameMatrix};
use crate::error::{Error, Result};

/// Text-derived word vectors: an EMB1 matrix plus a JSON index mapping each
/// word type to its row, e.g. `{"huis": 0, "boom": 1}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferenceVectors {
    vectors: BTreeMap<String, Vec<f64>>,
}

impl ReferenceVectors {
    pub fn from_parts(matrix: &FrameMatrix, index_json: &str) -> Result<Self> {
        let index: BTreeMap<String, usize> = serde_json::from_str(index_json)
            .map_err(|e| Error::Format(format!("reference index: {e}")))?;
        let mut vectors = BTreeMap::new();
        for (word, row) in index {
            if row >= matrix.num_frames() {
                return Err(Error::Validation(format!(
                    "reference index maps {word:?} to row {row}, matrix has {} rows",
                    matrix.num_frames()
                )));
            }
            let v = matrix.row(row).iter().map(|&x| f64::from(x)).collect();
            vectors.insert(word, v);
        }
        Ok(ReferenceVectors { vectors })
    }

    pub fn load(matrix_path: &Path, index_path: &Path) -> Result<Self> {
        let matrix = read_frame_matrix(matrix_path)?;
        let text = fs::read_to_string(index_path).map_err(|e| Error::io(index_path, e))?;
        Self::from_parts(&matrix, &text)
    }

    pub fn from_map(vectors: BTreeMap<String, Vec<f64>>) -> Self {
        ReferenceVectors { vectors }
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}
