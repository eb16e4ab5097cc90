//! Held-out-speaker analyses: phone identity probes and clustering after
//! PCA/LDA reduction.

use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use rayon::prelude::*;

use super::bootstrap::bootstrap_ci;
use super::result::{enclose, mean, Analysis, AnalysisContext, LayerwiseResult, ResultMetadata};
use crate::error::{Error, Result};
use crate::linalg::{
    fit_lda, fit_logreg, fit_pca, project, silhouette_samples, DistanceMetric, FitConfig,
    ProjectionKind,
};
use crate::sampling::SpeakerSplit;
use crate::store::SegmentTable;

const CI_METHOD: &str = "percentile bootstrap over held-out tokens";

struct Partition<'t> {
    train: Vec<usize>,
    test: Vec<usize>,
    table: &'t SegmentTable,
}

impl<'t> Partition<'t> {
    fn new(table: &'t SegmentTable, split: &SpeakerSplit) -> Result<Self> {
        let (train, test) = split.partition(table);
        if train.is_empty() || test.is_empty() {
            return Err(Error::Data(format!(
                "layer {}: split leaves {} train and {} test rows",
                table.layer(),
                train.len(),
                test.len()
            )));
        }
        Ok(Partition { train, test, table })
    }

    fn labels(&self, rows: &[usize]) -> Vec<&'t str> {
        rows.iter().map(|&i| self.table.meta(i).label.as_str()).collect()
    }

    /// Drops test rows whose class never occurs in training and notes
    /// training classes absent from the test side.
    fn align_classes(&mut self, train_classes: &BTreeSet<&str>, warnings: &mut Vec<String>) {
        let table = self.table;
        let mut dropped: BTreeMap<&str, usize> = BTreeMap::new();
        self.test.retain(|&i| {
            let label = table.meta(i).label.as_str();
            let keep = train_classes.contains(label);
            if !keep {
                *dropped.entry(label).or_default() += 1;
            }
            keep
        });
        for (label, n) in dropped {
            warnings.push(format!(
                "class {label:?} absent from training split; dropped {n} test tokens"
            ));
        }
        let test_classes: BTreeSet<&str> = self.labels(&self.test).into_iter().collect();
        let missing: Vec<&str> = train_classes.difference(&test_classes).copied().collect();
        if !missing.is_empty() {
            warnings.push(format!("classes absent from test split: {}", missing.join(" ")));
        }
    }
}

fn split_metadata(meta: &mut ResultMetadata, split: &SpeakerSplit) {
    meta.train_speakers = split.train_speakers.iter().cloned().collect();
    meta.test_speakers = split.test_speakers.iter().cloned().collect();
}

/// Fits one probe per layer on train-speaker rows and scores accuracy on
/// test-speaker rows.
pub fn run_probe(
    tables: &[SegmentTable],
    split: &SpeakerSplit,
    cfg: &FitConfig,
    ctx: &AnalysisContext,
) -> Result<Vec<LayerwiseResult>> {
    cfg.validate()?;
    tables
        .par_iter()
        .map(|table| probe_layer(table, split, cfg, ctx))
        .collect()
}

fn probe_layer(
    table: &SegmentTable,
    split: &SpeakerSplit,
    cfg: &FitConfig,
    ctx: &AnalysisContext,
) -> Result<LayerwiseResult> {
    let mut warnings = Vec::new();
    let mut part = Partition::new(table, split)?;
    let train_labels = part.labels(&part.train);
    let train_classes: BTreeSet<&str> = train_labels.iter().copied().collect();
    part.align_classes(&train_classes, &mut warnings);
    if part.test.is_empty() {
        return Err(Error::Data(format!(
            "layer {}: no test tokens of a trained class",
            table.layer()
        )));
    }
    let model = fit_logreg(&table.matrix_of(&part.train), &train_labels, cfg)?;
    if !model.convergence.converged {
        warnings.push(format!(
            "probe stopped after {} iterations with gradient norm {:.3e}",
            model.convergence.iterations, model.convergence.grad_inf_norm
        ));
    }
    let predicted = model.predict_labels(&table.matrix_of(&part.test))?;
    let scores: Vec<f64> = predicted
        .iter()
        .zip(part.labels(&part.test))
        .map(|(p, t)| if *p == t { 1.0 } else { 0.0 })
        .collect();
    let value = mean(&scores);
    let (ci_low, ci_high) = enclose(value, bootstrap_ci(&scores, &ctx.bootstrap)?);

    let mut meta = ResultMetadata::new(ctx, CI_METHOD);
    meta.param("l2_lambda", cfg.l2_lambda);
    meta.param("max_iter", cfg.max_iter);
    meta.param("tol", cfg.tol);
    meta.param("standardize", true);
    meta.param("converged", model.convergence.converged);
    meta.param("iterations", model.convergence.iterations);
    meta.n_classes = Some(model.classes.len());
    split_metadata(&mut meta, split);
    for w in &warnings {
        debug!("probe layer {}: {w}", table.layer());
    }
    meta.warnings = warnings;
    Ok(LayerwiseResult {
        analysis: Analysis::Probe,
        tier: table.tier(),
        layer: table.layer(),
        value,
        ci_low,
        ci_high,
        n_items: scores.len(),
        per_item_scores: Some(scores),
        per_contrast: None,
        metadata: meta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    pub reducer: ProjectionKind,
    pub k: usize,
    pub metric: DistanceMetric,
    pub lda_shrinkage: f64,
}

/// Fits the reducer on train-speaker rows, projects test-speaker rows and
/// reports their mean silhouette grouped by label.
pub fn run_cluster(
    tables: &[SegmentTable],
    split: &SpeakerSplit,
    cfg: &ClusterConfig,
    ctx: &AnalysisContext,
) -> Result<Vec<LayerwiseResult>> {
    tables
        .par_iter()
        .map(|table| cluster_layer(table, split, cfg, ctx))
        .collect()
}

fn cluster_layer(
    table: &SegmentTable,
    split: &SpeakerSplit,
    cfg: &ClusterConfig,
    ctx: &AnalysisContext,
) -> Result<LayerwiseResult> {
    let mut warnings = Vec::new();
    let mut part = Partition::new(table, split)?;

    let mut k = cfg.k;
    let projection = match cfg.reducer {
        ProjectionKind::Pca => {
            k = k.min(part.train.len()).min(table.dim());
            fit_pca(&table.matrix_of(&part.train), k)?
        }
        ProjectionKind::Lda => {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for l in part.labels(&part.train) {
                *counts.entry(l).or_default() += 1;
            }
            let rare: Vec<&str> = counts.iter().filter(|(_, &n)| n < 2).map(|(l, _)| *l).collect();
            if !rare.is_empty() {
                warnings.push(format!(
                    "classes with fewer than 2 training tokens left out of LDA fit: {}",
                    rare.join(" ")
                ));
                part.train.retain(|&i| counts[table.meta(i).label.as_str()] >= 2);
            }
            let train_labels = part.labels(&part.train);
            let n_classes = train_labels.iter().collect::<BTreeSet<_>>().len();
            k = k.min(table.dim()).min(n_classes.saturating_sub(1)).max(1);
            fit_lda(&table.matrix_of(&part.train), &train_labels, k, cfg.lda_shrinkage)?
        }
    };
    if k != cfg.k {
        warnings.push(format!("reduced dimensionality lowered from {} to {k}", cfg.k));
    }
    warnings.extend(projection.warnings.iter().cloned());

    let test_labels = part.labels(&part.test);
    let classes: BTreeMap<&str, usize> = test_labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    if classes.len() < 2 {
        return Err(Error::Parameter(format!(
            "layer {}: fewer than 2 labels among test tokens",
            table.layer()
        )));
    }
    let cluster_ids: Vec<usize> = test_labels.iter().map(|l| classes[l]).collect();
    let projected = project(&projection, &table.matrix_of(&part.test))?;
    let scores = silhouette_samples(&projected, &cluster_ids, cfg.metric)?;
    let value = mean(&scores);
    let (ci_low, ci_high) = enclose(value, bootstrap_ci(&scores, &ctx.bootstrap)?);

    let analysis = match cfg.reducer {
        ProjectionKind::Pca => Analysis::ClusterPca,
        ProjectionKind::Lda => Analysis::ClusterLda,
    };
    let mut meta = ResultMetadata::new(ctx, CI_METHOD);
    meta.param("reducer", cfg.reducer.as_str());
    meta.param("k", k);
    meta.param("k_requested", cfg.k);
    meta.param(
        "metric",
        serde_json::to_value(cfg.metric).expect("metric serializes"),
    );
    if cfg.reducer == ProjectionKind::Lda {
        meta.param("lda_shrinkage", cfg.lda_shrinkage);
    }
    meta.n_classes = Some(classes.len());
    split_metadata(&mut meta, split);
    for w in &warnings {
        debug!("{analysis} layer {}: {w}", table.layer());
    }
    meta.warnings = warnings;
    Ok(LayerwiseResult {
        analysis,
        tier: table.tier(),
        layer: table.layer(),
        value,
        ci_low,
        ci_high,
        n_items: scores.len(),
        per_item_scores: Some(scores),
        per_contrast: None,
        metadata: meta,
    })
}
