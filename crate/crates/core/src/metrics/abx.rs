use std::collections::BTreeMap;

use rayon::prelude::*;

use super::bootstrap::bootstrap_ci;
use super::result::{
    enclose, mean, Analysis, AnalysisContext, ContrastScore, LayerwiseResult, ResultMetadata,
};
use crate::error::{Error, Result};
use crate::linalg::cosine_similarity;
use crate::sampling::{Triplet, TripletSet};
use crate::store::SegmentTable;

/// 1 if `cos(A, X) > cos(A, B)`, 0.5 on an exact tie, else 0.
pub fn abx_score(a: &[f64], b: &[f64], x: &[f64]) -> Result<f64> {
    let within = cosine_similarity(a, x)?;
    let between = cosine_similarity(a, b)?;
    Ok(if within > between {
        1.0
    } else if within == between {
        0.5
    } else {
        0.0
    })
}

fn resolve<'t>(table: &'t SegmentTable, t: &Triplet) -> Result<[&'t [f64]; 3]> {
    let get = |id| {
        table.index_of(id).map(|i| table.embedding(i)).ok_or_else(|| {
            Error::Data(format!(
                "triplet (A={}, B={}, X={}) references {id}, missing from layer {}",
                t.a,
                t.b,
                t.x,
                table.layer()
            ))
        })
    };
    Ok([get(&t.a)?, get(&t.b)?, get(&t.x)?])
}

pub fn run_abx(
    tables: &[SegmentTable],
    triplets: &TripletSet,
    ctx: &AnalysisContext,
) -> Result<Vec<LayerwiseResult>> {
    if triplets.triplets.is_empty() {
        return Err(Error::Data("ABX needs at least one triplet".into()));
    }
    tables
        .par_iter()
        .map(|table| abx_layer(table, triplets, ctx))
        .collect()
}

fn abx_layer(
    table: &SegmentTable,
    triplets: &TripletSet,
    ctx: &AnalysisContext,
) -> Result<LayerwiseResult> {
    let scores: Vec<f64> = triplets
        .triplets
        .par_iter()
        .map(|t| {
            let [a, b, x] = resolve(table, t)?;
            abx_score(a, b, x).map_err(|e| Error::Data(format!("triplet ({}, {}, {}): {e}", t.a, t.b, t.x)))
        })
        .collect::<Result<_>>()?;

    let mut by_contrast: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (t, s) in triplets.triplets.iter().zip(&scores) {
        let e = by_contrast.entry(t.contrast.to_string()).or_default();
        e.0 += s;
        e.1 += 1;
    }
    let per_contrast = by_contrast
        .into_iter()
        .map(|(contrast, (sum, n))| ContrastScore {
            contrast,
            value: sum / n as f64,
            n_triplets: n,
        })
        .collect();

    let value = mean(&scores);
    let (ci_low, ci_high) = enclose(value, bootstrap_ci(&scores, &ctx.bootstrap)?);
    let mut meta = ResultMetadata::new(ctx, "percentile bootstrap over triplets");
    meta.param("similarity", "cosine");
    meta.param("tie_score", 0.5);
    meta.param("per_contrast_cap", triplets.per_contrast_cap);
    meta.seeds.insert("triplets".into(), triplets.seed);
    meta.warnings = triplets.warnings();
    Ok(LayerwiseResult {
        analysis: Analysis::Abx,
        tier: table.tier(),
        layer: table.layer(),
        value,
        ci_low,
        ci_high,
        n_items: scores.len(),
        per_item_scores: Some(scores),
        per_contrast: Some(per_contrast),
        metadata: meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_cases() {
        assert_eq!(abx_score(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(abx_score(&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(abx_score(&[1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]).unwrap(), 0.5);
        assert!(abx_score(&[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]).is_err());
    }
}
