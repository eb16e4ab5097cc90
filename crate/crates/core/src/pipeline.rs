//! End-to-end orchestration: pooling (with an on-disk cache), sampling,
//! triplet construction and the selected analyses for every dataset of a
//! [`RunConfig`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{DatasetConfig, RunConfig};
use crate::container::{load_segment_table, save_segment_table};
use crate::error::{Error, ErrorKind, Result};
use crate::inventory::{dutch_default_contrasts, load_contrasts, Contrast, PhoneInventory};
use crate::linalg::ProjectionKind;
use crate::metrics::{
    build_rsa_set, run_abx, run_cluster, run_probe, run_rsa, Analysis, AnalysisContext,
    BootstrapConfig, ClusterConfig, LayerwiseResult,
};
use crate::sampling::{
    build_abx_triplets_with, sample_occurrences, sample_types, split_by_speaker, split_speakers,
    SampleSet, SpeakerSplit, TripletConstraints, TripletSet,
};
use crate::store::{build_segment_table, CorpusManifest, ReferenceVectors, SegmentTable, Tier};

/// Segment tables of one dataset, one per selected layer and tier.
#[derive(Debug, Clone)]
pub struct PooledDataset {
    pub name: String,
    pub layers: Vec<u32>,
    pub phone: Vec<SegmentTable>,
    /// Empty unless some analysis needs the word tier.
    pub word: Vec<SegmentTable>,
    pub warnings: Vec<String>,
}

/// One analysis (or stage) that did not produce results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub dataset: String,
    pub stage: String,
    pub kind: ErrorKind,
    pub message: String,
}

impl Failure {
    fn new(dataset: &str, stage: &str, err: &Error) -> Self {
        Failure {
            dataset: dataset.to_string(),
            stage: stage.to_string(),
            kind: err.kind(),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub results: Vec<LayerwiseResult>,
    pub failures: Vec<Failure>,
    pub warnings: Vec<String>,
}

/// Parses a vocabulary list: one word per line, `#` comments, duplicates
/// dropped with first occurrence kept.
pub fn parse_vocab(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter(|l| seen.insert(l.to_string()))
        .map(str::to_string)
        .collect()
}

pub fn load_vocab(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_vocab(&text))
}

pub fn load_inventory(cfg: &RunConfig) -> Result<(PhoneInventory, Vec<Contrast>)> {
    let inventory = match &cfg.inventory {
        Some(p) => PhoneInventory::load(p)?,
        None => PhoneInventory::dutch_default(),
    };
    let contrasts = match &cfg.contrasts {
        Some(p) => load_contrasts(p, &inventory)?,
        None => dutch_default_contrasts(&inventory)?,
    };
    Ok((inventory, contrasts))
}

fn needs_word_tier(cfg: &RunConfig, ds: &DatasetConfig) -> bool {
    cfg.analyses.contains(&Analysis::Rsa)
        || (ds.cluster_tiers.contains(&Tier::Word)
            && cfg.analyses.iter().any(|a| matches!(a, Analysis::ClusterPca | Analysis::ClusterLda)))
}

fn selected_layers(manifest: &CorpusManifest, wanted: Option<&[u32]>) -> Result<Vec<u32>> {
    let Some(wanted) = wanted else {
        return Ok(manifest.layers.clone());
    };
    let missing: Vec<u32> = wanted.iter().copied().filter(|l| !manifest.layers.contains(l)).collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "layers {missing:?} not in manifest {} (layers {:?})",
            manifest.dataset_name, manifest.layers
        )));
    }
    Ok(wanted.to_vec())
}

/// Content hash of everything a `(tier, layer)` table is built from.
fn input_hash(manifest: &CorpusManifest, tier: Tier, layer: u32) -> Result<String> {
    let mut h = Sha256::new();
    h.update(crate::VERSION.as_bytes());
    h.update(tier.as_str().as_bytes());
    h.update(layer.to_le_bytes());
    h.update(manifest.frame_hop_s.to_le_bytes());
    let alignments: BTreeSet<&Path> = manifest.utterances.iter().map(|u| u.alignment.as_path()).collect();
    for path in alignments {
        h.update(fs::read(path).map_err(|e| Error::io(path, e))?);
    }
    for u in &manifest.utterances {
        h.update(u.utterance_id.as_bytes());
        h.update(u.speaker_id.as_bytes());
        if let Some(path) = u.embeddings.get(&layer) {
            h.update(fs::read(path).map_err(|e| Error::io(path, e))?);
        }
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn pool_table(
    manifest: &CorpusManifest,
    tier: Tier,
    layer: u32,
    cache_dir: Option<&Path>,
) -> Result<(SegmentTable, Vec<String>)> {
    let Some(dir) = cache_dir else {
        let built = build_segment_table(manifest, tier, layer)?;
        return Ok((built.table, built.warnings));
    };
    let hash = input_hash(manifest, tier, layer)?;
    let path = dir.join(format!("{}_L{layer}.segt", tier.as_str()));
    let mut warnings = Vec::new();
    if path.exists() {
        match load_segment_table(&path) {
            Ok((table, cached)) if cached == hash => return Ok((table, warnings)),
            Ok(_) => log::info!("{}: inputs changed, rebuilding", path.display()),
            Err(e) => {
                let msg = format!("cache {} unreadable ({e}); recomputing", path.display());
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    let built = build_segment_table(manifest, tier, layer)?;
    warnings.extend(built.warnings);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_segment_table(&built.table, &hash, &path)?;
    Ok((built.table, warnings))
}

fn pool_tier(
    manifest: &CorpusManifest,
    tier: Tier,
    layers: &[u32],
    cache_dir: Option<&Path>,
) -> Result<(Vec<SegmentTable>, Vec<String>)> {
    let built: Vec<(SegmentTable, Vec<String>)> = layers
        .par_iter()
        .map(|&l| pool_table(manifest, tier, l, cache_dir))
        .collect::<Result<_>>()?;
    let mut warnings: Vec<String> = Vec::new();
    let mut tables = Vec::with_capacity(built.len());
    for (t, w) in built {
        for w in w {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        tables.push(t);
    }
    Ok((tables, warnings))
}

/// Pools the phone tier (and the word tier if needed) for the selected
/// layers. `cache_root` enables the table cache under `cache_root/<dataset>`.
pub fn pool_dataset(
    cfg: &RunConfig,
    ds: &DatasetConfig,
    cache_root: Option<&Path>,
) -> Result<PooledDataset> {
    let manifest = CorpusManifest::load(&ds.manifest)?;
    let layers = selected_layers(&manifest, cfg.layers.as_deref())?;
    let cache_dir: Option<PathBuf> = cache_root.map(|r| r.join(&ds.name));
    let (phone, mut warnings) = pool_tier(&manifest, Tier::Phone, &layers, cache_dir.as_deref())?;
    let word = if needs_word_tier(cfg, ds) {
        let (word, w) = pool_tier(&manifest, Tier::Word, &layers, cache_dir.as_deref())?;
        warnings.extend(w);
        word
    } else {
        Vec::new()
    };
    Ok(PooledDataset {
        name: ds.name.clone(),
        layers,
        phone,
        word,
        warnings,
    })
}

/// Phone sample, speaker split and the sampled per-layer tables.
#[derive(Debug, Clone)]
pub struct PhoneSampling {
    pub sample: SampleSet,
    pub split: SpeakerSplit,
    pub tables: Vec<SegmentTable>,
    pub warnings: Vec<String>,
}

pub fn sample_phones(
    cfg: &RunConfig,
    ds: &DatasetConfig,
    pooled: &PooledDataset,
    inventory: &PhoneInventory,
) -> Result<PhoneSampling> {
    let first = pooled
        .phone
        .first()
        .ok_or_else(|| Error::Data(format!("dataset {}: no layers selected", ds.name)))?;
    let mut warnings = Vec::new();
    let keep: Vec<_> = first
        .rows()
        .iter()
        .filter(|m| inventory.contains(&m.label))
        .map(|m| m.id.clone())
        .collect();
    let dropped = first.len() - keep.len();
    if dropped > 0 {
        let labels: BTreeSet<&str> = first
            .rows()
            .iter()
            .filter(|m| !inventory.contains(&m.label))
            .map(|m| m.label.as_str())
            .collect();
        warnings.push(format!(
            "{dropped} phone tokens outside the inventory dropped (labels: {})",
            labels.into_iter().collect::<Vec<_>>().join(" ")
        ));
    }
    let in_inventory = first.subset(&keep)?;
    let sample = sample_occurrences(&in_inventory, ds.phone_quota, cfg.stage_seed(&ds.name, "sample"))?;
    for s in &sample.scarcity {
        log::debug!(
            "{}: speaker {} has {} tokens of {} (quota {})",
            ds.name,
            s.speaker_id,
            s.available,
            s.label,
            ds.phone_quota
        );
    }
    if !sample.scarcity.is_empty() {
        warnings.push(format!(
            "{} (speaker, phone) groups had fewer tokens than the quota of {}",
            sample.scarcity.len(),
            ds.phone_quota
        ));
    }
    let split = split_by_speaker(&sample, ds.n_test_speakers, cfg.stage_seed(&ds.name, "split"))?;
    let ids = sample.ids();
    let tables = pooled
        .phone
        .par_iter()
        .map(|t| t.subset(&ids))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhoneSampling {
        sample,
        split,
        tables,
        warnings,
    })
}

pub fn build_triplets(
    cfg: &RunConfig,
    ds: &DatasetConfig,
    sampled: &PhoneSampling,
    contrasts: &[Contrast],
) -> Result<TripletSet> {
    let table = sampled
        .tables
        .first()
        .ok_or_else(|| Error::Data(format!("dataset {}: no layers selected", ds.name)))?;
    build_abx_triplets_with(
        table,
        contrasts,
        ds.triplet_cap,
        cfg.stage_seed(&ds.name, "triplets"),
        TripletConstraints {
            distinct_context: ds.distinct_context,
        },
    )
}

fn context(cfg: &RunConfig, ds: &DatasetConfig, stage: &str, hash: &str) -> AnalysisContext {
    let mut seeds = BTreeMap::new();
    seeds.insert("base".to_string(), cfg.seed);
    for s in ["sample", "split", "triplets", "rsa", "word_cluster"] {
        seeds.insert(s.to_string(), cfg.stage_seed(&ds.name, s));
    }
    AnalysisContext {
        dataset: ds.name.clone(),
        model: cfg.model.clone(),
        bootstrap: BootstrapConfig {
            n_resamples: cfg.bootstrap.n_resamples,
            alpha: cfg.bootstrap.alpha,
            seed: cfg.stage_seed(&ds.name, &format!("bootstrap/{stage}")),
        },
        seeds,
        config_hash: hash.to_string(),
    }
}

/// Word-tier tables restricted to sampled tokens of the most frequent
/// vocabulary words, with a speaker split over those tokens.
fn word_cluster_inputs(
    cfg: &RunConfig,
    ds: &DatasetConfig,
    word: &[SegmentTable],
    vocab: &[String],
) -> Result<(Vec<SegmentTable>, SpeakerSplit)> {
    let first = word
        .first()
        .ok_or_else(|| Error::Data(format!("dataset {}: no word tables", ds.name)))?;
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for m in first.rows() {
        *freq.entry(m.label.as_str()).or_default() += 1;
    }
    let mut ranked: Vec<(&String, usize)> = vocab
        .iter()
        .filter_map(|w| freq.get(w.as_str()).map(|&n| (w, n)))
        .collect();
    // stable sort keeps vocabulary order among ties
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    let types: Vec<String> = ranked
        .into_iter()
        .take(ds.word_cluster_types)
        .map(|(w, _)| w.clone())
        .collect();
    if types.len() < 2 {
        return Err(Error::Data(format!(
            "dataset {}: word clustering needs at least 2 vocabulary words with tokens",
            ds.name
        )));
    }
    let sample = sample_types(
        first,
        &types,
        ds.word_cluster_max_per_type,
        cfg.stage_seed(&ds.name, "word_cluster"),
    )?;
    let speakers: BTreeSet<&str> = sample.tokens.iter().map(|t| t.speaker_id.as_str()).collect();
    let split = split_speakers(
        speakers.into_iter(),
        ds.word_test_speakers,
        cfg.stage_seed(&ds.name, "word_split"),
    )?;
    let ids: Vec<_> = sample.tokens.iter().map(|t| t.segment.clone()).collect();
    let tables = word.par_iter().map(|t| t.subset(&ids)).collect::<Result<Vec<_>>>()?;
    Ok((tables, split))
}

struct DatasetRun<'a> {
    cfg: &'a RunConfig,
    ds: &'a DatasetConfig,
    hash: &'a str,
    strict: bool,
    outcome: RunOutcome,
}

impl DatasetRun<'_> {
    /// Records a failure; in strict mode returns it as an error instead.
    fn fail(&mut self, stage: &str, err: Error) -> Result<()> {
        if self.strict {
            return Err(err);
        }
        log::warn!("{} {stage}: {err}", self.ds.name);
        self.outcome.failures.push(Failure::new(&self.ds.name, stage, &err));
        Ok(())
    }

    fn collect(&mut self, stage: &str, res: Result<Vec<LayerwiseResult>>) -> Result<()> {
        match res {
            Ok(rows) => {
                self.outcome.results.extend(rows);
                Ok(())
            }
            Err(e) => self.fail(stage, e),
        }
    }

    fn ctx(&self, stage: &str) -> AnalysisContext {
        context(self.cfg, self.ds, stage, self.hash)
    }
}

fn run_one_dataset(
    cfg: &RunConfig,
    ds: &DatasetConfig,
    pooled: &PooledDataset,
    inventory: &PhoneInventory,
    contrasts: &[Contrast],
    strict: bool,
) -> Result<RunOutcome> {
    let hash = cfg.hash();
    let mut run = DatasetRun {
        cfg,
        ds,
        hash: &hash,
        strict,
        outcome: RunOutcome {
            warnings: pooled.warnings.iter().map(|w| format!("{}: {w}", ds.name)).collect(),
            ..Default::default()
        },
    };
    let wants = |a: Analysis| cfg.analyses.contains(&a);
    let phone_analyses = [Analysis::Probe, Analysis::Abx, Analysis::ClusterPca, Analysis::ClusterLda];

    let sampled = if phone_analyses.iter().any(|&a| wants(a)) {
        match sample_phones(cfg, ds, pooled, inventory) {
            Ok(s) => {
                run.outcome
                    .warnings
                    .extend(s.warnings.iter().map(|w| format!("{}: {w}", ds.name)));
                Some(s)
            }
            Err(e) => {
                run.fail("sample", e)?;
                None
            }
        }
    } else {
        None
    };

    let vocab = match &ds.vocab {
        Some(p) if needs_word_tier(cfg, ds) => match load_vocab(p) {
            Ok(v) => Some(v),
            Err(e) => {
                run.fail("vocab", e)?;
                None
            }
        },
        _ => None,
    };

    for &analysis in &cfg.analyses {
        match analysis {
            Analysis::Probe => {
                if let Some(s) = &sampled {
                    let res = run_probe(&s.tables, &s.split, &cfg.fit, &run.ctx("probe"));
                    run.collect("probe", res)?;
                }
            }
            Analysis::Abx => {
                if let Some(s) = &sampled {
                    let res = build_triplets(cfg, ds, s, contrasts).and_then(|t| {
                        let skipped: Vec<String> = t
                            .coverage
                            .iter()
                            .filter(|c| c.skipped)
                            .map(|c| c.contrast.to_string())
                            .collect();
                        if !skipped.is_empty() {
                            run.outcome.warnings.push(format!(
                                "{}: {} contrasts have no valid ABX triplets and were skipped: {}",
                                ds.name,
                                skipped.len(),
                                skipped.join(" ")
                            ));
                        }
                        run_abx(&s.tables, &t, &run.ctx("abx"))
                    });
                    run.collect("abx", res)?;
                }
            }
            Analysis::ClusterPca | Analysis::ClusterLda => {
                let reducer = if analysis == Analysis::ClusterPca {
                    ProjectionKind::Pca
                } else {
                    ProjectionKind::Lda
                };
                for &tier in &ds.cluster_tiers {
                    let stage = format!("{}/{}", analysis.as_str(), tier.as_str());
                    let ccfg = ClusterConfig {
                        reducer,
                        k: if tier == Tier::Phone { ds.phone_k } else { ds.word_k },
                        metric: cfg.metric,
                        lda_shrinkage: cfg.fit.lda_shrinkage,
                    };
                    let res = match tier {
                        Tier::Phone => match &sampled {
                            Some(s) => run_cluster(&s.tables, &s.split, &ccfg, &run.ctx(&stage)),
                            None => continue,
                        },
                        Tier::Word => match &vocab {
                            Some(v) => word_cluster_inputs(cfg, ds, &pooled.word, v).and_then(|(t, split)| {
                                run_cluster(&t, &split, &ccfg, &run.ctx(&stage))
                            }),
                            None => continue,
                        },
                    };
                    run.collect(&stage, res)?;
                }
            }
            Analysis::Rsa => {
                let Some(v) = &vocab else { continue };
                let res = (|| {
                    let (Some(vp), Some(ip)) = (&ds.reference_vectors, &ds.reference_index) else {
                        return Err(Error::Config("rsa needs reference vectors".into()));
                    };
                    let reference = ReferenceVectors::load(vp, ip)?;
                    let first = pooled
                        .word
                        .first()
                        .ok_or_else(|| Error::Data("no word tables".into()))?;
                    let set = build_rsa_set(
                        first,
                        v,
                        ds.rsa_max_per_type,
                        &reference,
                        cfg.stage_seed(&ds.name, "rsa"),
                    )?;
                    run_rsa(&pooled.word, &set, &run.ctx("rsa"))
                })();
                run.collect("rsa", res)?;
            }
        }
    }
    Ok(run.outcome)
}

/// Runs every dataset of `cfg`. Without `strict`, failures of single
/// analyses are recorded in the outcome and the run continues; with it the
/// first failure is returned.
pub fn run(cfg: &RunConfig, cache_root: Option<&Path>, strict: bool) -> Result<RunOutcome> {
    cfg.validate()?;
    let (inventory, contrasts) = load_inventory(cfg)?;
    let mut total = RunOutcome::default();
    for ds in &cfg.datasets {
        let pooled = match pool_dataset(cfg, ds, cache_root) {
            Ok(p) => p,
            Err(e) if !strict && e.kind() != ErrorKind::Config => {
                total.failures.push(Failure::new(&ds.name, "pool", &e));
                continue;
            }
            Err(e) => return Err(e),
        };
        let out = run_one_dataset(cfg, ds, &pooled, &inventory, &contrasts, strict)?;
        total.results.extend(out.results.into_iter().map(|mut r| {
            if !cfg.keep_item_scores {
                r.per_item_scores = None;
            }
            r
        }));
        total.failures.extend(out.failures);
        total.warnings.extend(out.warnings);
    }
    Ok(total)
}
