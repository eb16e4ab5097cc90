//! Representational similarity between speech-derived word tokens and
//! text-derived word vectors.

use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bootstrap::bootstrap_percentile;
use super::result::{Analysis, AnalysisContext, LayerwiseResult, ResultMetadata};
use crate::error::{Error, Result};
use crate::linalg::{cosine_distance, pearson};
use crate::sampling::{sample_types, SampleRow};
use crate::store::{ReferenceVectors, SegmentTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsaSet {
    pub tokens: Vec<SampleRow>,
    /// Reference vector of every word type present in `tokens`.
    pub reference: BTreeMap<String, Vec<f64>>,
    pub max_per_type: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
}

/// Samples up to `max_per_type` tokens per vocabulary word, each from a
/// different speaker. Words without a reference vector are left out.
pub fn build_rsa_set(
    table: &SegmentTable,
    vocab: &[String],
    max_per_type: usize,
    reference: &ReferenceVectors,
    seed: u64,
) -> Result<RsaSet> {
    if vocab.is_empty() {
        return Err(Error::Parameter("RSA vocabulary is empty".into()));
    }
    let mut warnings = Vec::new();
    let mut kept = Vec::new();
    let mut missing = Vec::new();
    for w in vocab {
        if reference.get(w).is_some() {
            kept.push(w.clone());
        } else {
            missing.push(w.as_str());
        }
    }
    if !missing.is_empty() {
        warnings.push(format!(
            "{} word types have no reference vector and were excluded: {}",
            missing.len(),
            missing.join(" ")
        ));
    }
    let sample = sample_types(table, &kept, max_per_type, seed)?;
    if !sample.absent.is_empty() {
        warnings.push(format!(
            "{} vocabulary words have no tokens: {}",
            sample.absent.len(),
            sample.absent.join(" ")
        ));
    }
    for w in &warnings {
        debug!("rsa: {w}");
    }
    let types: BTreeSet<&str> = sample.tokens.iter().map(|t| t.label.as_str()).collect();
    let reference = types
        .into_iter()
        .map(|t| (t.to_string(), reference.get(t).expect("kept").to_vec()))
        .collect();
    Ok(RsaSet {
        tokens: sample.tokens,
        reference,
        max_per_type,
        seed,
        warnings,
    })
}

/// Index pairs `(i, j)`, `i < j`, of tokens with different types.
pub fn rsa_pairs<S: AsRef<str>>(types: &[S]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..types.len() {
        for j in i + 1..types.len() {
            if types[i].as_ref() != types[j].as_ref() {
                out.push((i, j));
            }
        }
    }
    out
}

/// Symmetric `n × n` distance matrix, row-major.
fn distance_matrix(vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let n = vectors.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| if i == j { Ok(0.0) } else { cosine_distance(vectors[i], vectors[j]) })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(rows.concat())
}

/// Pearson correlation of speech and reference distances over the given
/// token positions, skipping same-type pairs.
fn condensed_pearson(positions: &[usize], types: &[&str], speech: &[f64], text: &[f64]) -> Option<f64> {
    let n = types.len();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (p, &i) in positions.iter().enumerate() {
        for &j in &positions[p + 1..] {
            if types[i] != types[j] {
                xs.push(speech[i * n + j]);
                ys.push(text[i * n + j]);
            }
        }
    }
    pearson(&xs, &ys).ok()
}

pub fn run_rsa(
    tables: &[SegmentTable],
    rsa: &RsaSet,
    ctx: &AnalysisContext,
) -> Result<Vec<LayerwiseResult>> {
    let types: Vec<&str> = rsa.tokens.iter().map(|t| t.label.as_str()).collect();
    let n_pairs = rsa_pairs(&types).len();
    if n_pairs < 3 {
        return Err(Error::Data(format!(
            "RSA needs at least 3 different-type token pairs, got {n_pairs}"
        )));
    }
    let ref_vectors: Vec<&[f64]> = types
        .iter()
        .map(|t| {
            rsa.reference
                .get(*t)
                .map(Vec::as_slice)
                .ok_or_else(|| Error::Data(format!("no reference vector for {t:?}")))
        })
        .collect::<Result<_>>()?;
    let text = distance_matrix(&ref_vectors)?;

    tables
        .par_iter()
        .map(|table| {
            let speech_vectors: Vec<&[f64]> = rsa
                .tokens
                .iter()
                .map(|t| {
                    table.index_of(&t.segment).map(|i| table.embedding(i)).ok_or_else(|| {
                        Error::Data(format!(
                            "RSA token {} missing from layer {}",
                            t.segment,
                            table.layer()
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            let speech = distance_matrix(&speech_vectors)?;
            let all: Vec<usize> = (0..types.len()).collect();
            let value = condensed_pearson(&all, &types, &speech, &text).ok_or_else(|| {
                Error::Numerical(format!(
                    "layer {}: RSA correlation undefined (zero variance)",
                    table.layer()
                ))
            })?;
            let ci = bootstrap_percentile(types.len(), &ctx.bootstrap, |idx| {
                condensed_pearson(idx, &types, &speech, &text)
            })?;
            let mut meta = ResultMetadata::new(ctx, "percentile bootstrap over tokens (pearson recomputed)");
            meta.param("distance", "cosine");
            meta.param("n_pairs", n_pairs);
            meta.param("n_types", rsa.reference.len());
            meta.param("max_per_type", rsa.max_per_type);
            meta.seeds.insert("rsa".into(), rsa.seed);
            meta.warnings = rsa.warnings.clone();
            let (ci_low, ci_high) = ci.unwrap_or_else(|| {
                meta.warnings.push("no bootstrap resample had defined correlation".into());
                (value, value)
            });
            Ok(LayerwiseResult {
                analysis: Analysis::Rsa,
                tier: table.tier(),
                layer: table.layer(),
                value,
                ci_low,
                ci_high,
                n_items: types.len(),
                per_item_scores: None,
                per_contrast: None,
                metadata: meta,
            })
        })
        .collect()
}
