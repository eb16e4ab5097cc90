use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use log::debug;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::align::{load_alignments, SegmentRecord, Tier};
use super::frame::read_frame_matrix;
use super::manifest::{CorpusManifest, UtteranceEntry};
use super::pool::{pool_segment, time_to_frame_span, PoolMethod};
use crate::error::{Error, Result};

/// Stable segment reference, `"{utterance_id}:{k}"` where `k` is the
/// segment's rank within its utterance and tier (ordered by time). The same
/// id names the same token in every layer's table.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentId(pub String);

impl SegmentId {
    pub fn new(utterance_id: &str, rank: usize) -> Self {
        SegmentId(format!("{utterance_id}:{rank}"))
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMeta {
    pub id: SegmentId,
    pub utterance_id: String,
    pub speaker_id: String,
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
    /// Labels of the neighbouring segments of the same tier and utterance.
    pub prev_label: Option<String>,
    pub next_label: Option<String>,
}

/// Pooled segment embeddings of one tier and layer, one row per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTable {
    tier: Tier,
    layer: u32,
    dim: usize,
    rows: Vec<SegmentMeta>,
    data: Vec<f64>,
    index: HashMap<SegmentId, usize>,
}

impl SegmentTable {
    pub fn new(
        tier: Tier,
        layer: u32,
        dim: usize,
        rows: Vec<SegmentMeta>,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != rows.len() * dim {
            return Err(Error::Validation(format!(
                "segment table has {} values for {} rows of dim {dim}",
                data.len(),
                rows.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("segment table contains non-finite values".into()));
        }
        let mut index = HashMap::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if index.insert(row.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate segment id {}", row.id)));
            }
        }
        Ok(SegmentTable {
            tier,
            layer,
            dim,
            rows,
            data,
            index,
        })
    }

    pub fn tier(&self) -> Tier {
        self.tier
    }

    pub fn layer(&self) -> u32 {
        self.layer
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[SegmentMeta] {
        &self.rows
    }

    pub fn meta(&self, i: usize) -> &SegmentMeta {
        &self.rows[i]
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn raw_data(&self) -> &[f64] {
        &self.data
    }

    pub fn index_of(&self, id: &SegmentId) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Embeddings of the given rows as an `n × dim` matrix.
    pub fn matrix_of(&self, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.dim, |r, c| self.data[rows[r] * self.dim + c])
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.data)
    }

    /// Row indices sorted by `(utterance_id, start_s, end_s, id)`. Sampling
    /// and evaluation iterate in this order so results do not depend on the
    /// order rows were supplied in.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        idx.sort_by(|&a, &b| {
            let (ra, rb) = (&self.rows[a], &self.rows[b]);
            ra.utterance_id
                .cmp(&rb.utterance_id)
                .then(ra.start_s.total_cmp(&rb.start_s))
                .then(ra.end_s.total_cmp(&rb.end_s))
                .then_with(|| ra.id.cmp(&rb.id))
        });
        idx
    }

    /// Restricts the table to the given segment ids, in the order given.
    pub fn subset(&self, ids: &[SegmentId]) -> Result<SegmentTable> {
        let mut rows = Vec::with_capacity(ids.len());
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for id in ids {
            let i = self.index_of(id).ok_or_else(|| {
                Error::Data(format!("segment {id} not present in layer {} table", self.layer))
            })?;
            rows.push(self.rows[i].clone());
            data.extend_from_slice(self.embedding(i));
        }
        SegmentTable::new(self.tier, self.layer, self.dim, rows, data)
    }

    pub fn speakers(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.speaker_id.as_str()).collect()
    }

    pub fn labels(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.label.as_str()).collect()
    }
}

/// A built table plus non-fatal conditions met while building it.
#[derive(Debug, Clone)]
pub struct TableBuild {
    pub table: SegmentTable,
    pub warnings: Vec<String>,
}

fn records_for_utterance(
    entry: &UtteranceEntry,
    tier: Tier,
    cache: &BTreeMap<&std::path::Path, Vec<SegmentRecord>>,
) -> Result<Vec<SegmentRecord>> {
    let all = &cache[entry.alignment.as_path()];
    let mut recs: Vec<SegmentRecord> = all
        .iter()
        .filter(|r| r.utterance_id == entry.utterance_id && r.tier == tier)
        .cloned()
        .collect();
    if let Some(r) = recs.iter().find(|r| r.speaker_id != entry.speaker_id) {
        return Err(Error::Validation(format!(
            "utterance {}: alignment speaker {} differs from manifest speaker {}",
            entry.utterance_id, r.speaker_id, entry.speaker_id
        )));
    }
    recs.sort_by(|a, b| {
        a.start_s
            .total_cmp(&b.start_s)
            .then(a.end_s.total_cmp(&b.end_s))
            .then_with(|| a.label.cmp(&b.label))
    });
    Ok(recs)
}

fn pool_utterance(
    manifest: &CorpusManifest,
    entry: &UtteranceEntry,
    records: &[SegmentRecord],
    layer: u32,
) -> Result<(usize, Vec<SegmentMeta>, Vec<f64>)> {
    let path = entry.embeddings.get(&layer).ok_or_else(|| {
        Error::Data(format!(
            "utterance {} has no embedding for layer {layer}",
            entry.utterance_id
        ))
    })?;
    let matrix = read_frame_matrix(path).map_err(|e| {
        Error::Data(format!(
            "loading embedding of utterance {} layer {layer}: {e}",
            entry.utterance_id
        ))
    })?;
    if matrix.layer() != layer {
        return Err(Error::Data(format!(
            "{} declares layer {} but manifest lists it as layer {layer}",
            path.display(),
            matrix.layer()
        )));
    }
    let mut metas = Vec::with_capacity(records.len());
    let mut data = Vec::with_capacity(records.len() * matrix.dim());
    for (rank, rec) in records.iter().enumerate() {
        let span = time_to_frame_span(
            rec.start_s,
            rec.end_s,
            manifest.frame_hop_s,
            matrix.num_frames(),
        )
        .map_err(|e| {
            Error::Data(format!(
                "utterance {} segment {:?} [{}, {}): {e}",
                entry.utterance_id, rec.label, rec.start_s, rec.end_s
            ))
        })?;
        data.extend(pool_segment(&matrix, span, PoolMethod::Mean)?);
        metas.push(SegmentMeta {
            id: SegmentId::new(&entry.utterance_id, rank),
            utterance_id: rec.utterance_id.clone(),
            speaker_id: rec.speaker_id.clone(),
            label: rec.label.clone(),
            start_s: rec.start_s,
            end_s: rec.end_s,
            prev_label: rank.checked_sub(1).map(|p| records[p].label.clone()),
            next_label: records.get(rank + 1).map(|n| n.label.clone()),
        });
    }
    Ok((matrix.dim(), metas, data))
}

/// Pools every alignment record of `tier` in `layer` into a table ordered by
/// `(utterance_id, start_s)`. Utterances are processed in parallel; output is
/// independent of thread count.
pub fn build_segment_table(manifest: &CorpusManifest, tier: Tier, layer: u32) -> Result<TableBuild> {
    if !manifest.layers.contains(&layer) {
        return Err(Error::Parameter(format!(
            "layer {layer} not in manifest {} (layers {:?})",
            manifest.dataset_name, manifest.layers
        )));
    }
    let paths: BTreeSet<&std::path::Path> =
        manifest.utterances.iter().map(|u| u.alignment.as_path()).collect();
    let loaded: Vec<(&std::path::Path, Vec<SegmentRecord>)> = paths
        .into_par_iter()
        .map(|p| load_alignments(p).map(|r| (p, r)))
        .collect::<Result<_>>()?;
    let cache: BTreeMap<_, _> = loaded.into_iter().collect();

    let mut entries: Vec<&UtteranceEntry> = manifest.utterances.iter().collect();
    entries.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));

    let pooled: Vec<(usize, Vec<SegmentMeta>, Vec<f64>)> = entries
        .par_iter()
        .map(|entry| {
            let records = records_for_utterance(entry, tier, &cache)?;
            if records.is_empty() {
                return Ok((0, Vec::new(), Vec::new()));
            }
            pool_utterance(manifest, entry, &records, layer)
        })
        .collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    let mut dim = None;
    let mut rows = Vec::new();
    let mut data = Vec::new();
    for (d, metas, values) in pooled {
        if metas.is_empty() {
            continue;
        }
        match dim {
            None => dim = Some(d),
            Some(prev) if prev != d => {
                return Err(Error::Data(format!(
                    "layer {layer} embeddings disagree on dimension ({prev} vs {d})"
                )))
            }
            _ => {}
        }
        rows.extend(metas);
        data.extend(values);
    }
    if rows.is_empty() {
        let msg = format!(
            "dataset {}: no {tier} segments found for layer {layer}",
            manifest.dataset_name
        );
        debug!("{msg}");
        warnings.push(msg);
    }
    let table = SegmentTable::new(tier, layer, dim.unwrap_or(0), rows, data)?;
    Ok(TableBuild { table, warnings })
}
