//! Run configuration: one JSON document naming every input, constant and
//! seed of a run.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{DistanceMetric, FitConfig};
use crate::metrics::Analysis;
use crate::rng::derive_seed;
use crate::store::Tier;

fn default_analyses() -> Vec<Analysis> {
    Analysis::ALL.to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapSettings {
    pub n_resamples: usize,
    pub alpha: f64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        BootstrapSettings {
            n_resamples: 1000,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub manifest: PathBuf,
    /// Phone tokens sampled per speaker per phone (15 for MLS, 10 for IFADV).
    #[serde(default = "DatasetConfig::default_quota")]
    pub phone_quota: usize,
    /// Held-out speakers for probes and clustering.
    #[serde(default = "DatasetConfig::default_test_speakers")]
    pub n_test_speakers: usize,
    /// ABX triplets per contrast (3700 for MLS, 1100 for IFADV).
    #[serde(default = "DatasetConfig::default_cap")]
    pub triplet_cap: usize,
    #[serde(default = "DatasetConfig::default_phone_k")]
    pub phone_k: usize,
    #[serde(default = "DatasetConfig::default_word_k")]
    pub word_k: usize,
    #[serde(default)]
    pub vocab: Option<PathBuf>,
    #[serde(default)]
    pub reference_vectors: Option<PathBuf>,
    #[serde(default)]
    pub reference_index: Option<PathBuf>,
    #[serde(default = "DatasetConfig::default_rsa_per_type")]
    pub rsa_max_per_type: usize,
    /// Tiers evaluated by the clustering analyses.
    #[serde(default = "DatasetConfig::default_cluster_tiers")]
    pub cluster_tiers: Vec<Tier>,
    #[serde(default = "DatasetConfig::default_word_types")]
    pub word_cluster_types: usize,
    #[serde(default = "DatasetConfig::default_word_per_type")]
    pub word_cluster_max_per_type: usize,
    #[serde(default = "DatasetConfig::default_test_speakers")]
    pub word_test_speakers: usize,
    #[serde(default)]
    pub distinct_context: bool,
}

impl DatasetConfig {
    fn default_quota() -> usize {
        15
    }
    fn default_test_speakers() -> usize {
        3
    }
    fn default_cap() -> usize {
        3700
    }
    fn default_phone_k() -> usize {
        36
    }
    fn default_word_k() -> usize {
        49
    }
    fn default_rsa_per_type() -> usize {
        3
    }
    fn default_cluster_tiers() -> Vec<Tier> {
        vec![Tier::Phone]
    }
    fn default_word_types() -> usize {
        50
    }
    fn default_word_per_type() -> usize {
        9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    /// Base seed; every stochastic stage derives its own seed from it.
    pub seed: u64,
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub inventory: Option<PathBuf>,
    #[serde(default)]
    pub contrasts: Option<PathBuf>,
    #[serde(default = "default_analyses")]
    pub analyses: Vec<Analysis>,
    #[serde(default)]
    pub layers: Option<Vec<u32>>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub bootstrap: BootstrapSettings,
    #[serde(default)]
    pub metric: DistanceMetric,
    #[serde(default)]
    pub keep_item_scores: bool,
    #[serde(default = "RunConfig::default_output")]
    pub output_dir: PathBuf,
}

impl RunConfig {
    fn default_output() -> PathBuf {
        PathBuf::from("out")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json_str(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or_else(|| Path::new(".")));
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.inventory.as_mut().map(fix);
        self.contrasts.as_mut().map(fix);
        fix(&mut self.output_dir);
        for ds in &mut self.datasets {
            fix(&mut ds.manifest);
            ds.vocab.as_mut().map(fix);
            ds.reference_vectors.as_mut().map(fix);
            ds.reference_index.as_mut().map(fix);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.datasets.is_empty() {
            return err("config lists no datasets".into());
        }
        if self.analyses.is_empty() {
            return err("config selects no analyses".into());
        }
        let mut names = BTreeSet::new();
        for ds in &self.datasets {
            if ds.name.is_empty() || !names.insert(ds.name.as_str()) {
                return err(format!("dataset name {:?} is empty or repeated", ds.name));
            }
            if ds.phone_quota == 0 || ds.triplet_cap == 0 || ds.rsa_max_per_type == 0 {
                return err(format!("dataset {}: quotas and caps must be >= 1", ds.name));
            }
            if ds.phone_k == 0 || ds.word_k == 0 {
                return err(format!("dataset {}: reducer dims must be >= 1", ds.name));
            }
            let refs = [&ds.reference_vectors, &ds.reference_index];
            if refs.iter().filter(|r| r.is_some()).count() == 1 {
                return err(format!(
                    "dataset {}: reference_vectors and reference_index go together",
                    ds.name
                ));
            }
            if self.analyses.contains(&Analysis::Rsa)
                && (ds.vocab.is_none() || ds.reference_vectors.is_none())
            {
                return err(format!(
                    "dataset {}: rsa needs vocab, reference_vectors and reference_index",
                    ds.name
                ));
            }
            if ds.cluster_tiers.contains(&Tier::Word) && ds.vocab.is_none() {
                return err(format!("dataset {}: word clustering needs a vocab", ds.name));
            }
        }
        self.fit.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.bootstrap.n_resamples == 0 || !(self.bootstrap.alpha > 0.0 && self.bootstrap.alpha < 1.0) {
            return err("bootstrap needs n_resamples >= 1 and alpha in (0, 1)".into());
        }
        Ok(())
    }

    pub fn check_files(&self) -> Result<()> {
        let mut paths: Vec<&Path> = Vec::new();
        paths.extend(self.inventory.as_deref());
        paths.extend(self.contrasts.as_deref());
        for ds in &self.datasets {
            paths.push(&ds.manifest);
            paths.extend(ds.vocab.as_deref());
            paths.extend(ds.reference_vectors.as_deref());
            paths.extend(ds.reference_index.as_deref());
        }
        match paths.into_iter().find(|p| !p.is_file()) {
            Some(p) => Err(Error::Config(format!("referenced file {} does not exist", p.display()))),
            None => Ok(()),
        }
    }

    /// Hash of everything that determines results. The output directory is
    /// left out so that the same run written to two places hashes equally.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let text = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn stage_seed(&self, dataset: &str, stage: &str) -> u64 {
        derive_seed(self.seed, &format!("{dataset}/{stage}"))
    }
}

/// Parses layer selections such as `"0-12"`, `"3"` or `"1,4,7-9"`.
pub fn parse_layer_range(text: &str) -> Result<Vec<u32>> {
    let mut out = BTreeSet::new();
    for part in text.split(',').map(str::trim) {
        let bad = || Error::Config(format!("invalid layer range {text:?}"));
        if part.is_empty() {
            return Err(bad());
        }
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u32 = a.trim().parse().map_err(|_| bad())?;
                let b: u32 = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => {
                out.insert(part.parse().map_err(|_| bad())?);
            }
        }
    }
    Ok(out.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"model": "m", "seed": 7, "analyses": ["probe", "abx"],
        "datasets": [{"name": "desk", "manifest": "manifest.json"}]}"#;

    #[test]
    fn defaults_follow_reference_setup() {
        let cfg = RunConfig::from_json_str(MINIMAL).unwrap();
        let ds = &cfg.datasets[0];
        assert_eq!((ds.phone_quota, ds.n_test_speakers, ds.triplet_cap), (15, 3, 3700));
        assert_eq!((ds.phone_k, ds.word_k), (36, 49));
        assert_eq!(cfg.fit, FitConfig::default());
        assert_eq!(cfg.bootstrap.n_resamples, 1000);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(RunConfig::from_json_str("{}"), Err(Error::Config(_))));
        let rsa = MINIMAL.replace(r#""abx"]"#, r#""rsa"]"#);
        assert!(RunConfig::from_json_str(&rsa).is_err());
        let unknown = MINIMAL.replace(r#""seed": 7"#, r#""seed": 7, "sed": 1"#);
        assert!(RunConfig::from_json_str(&unknown).is_err());
        let bad = MINIMAL.replace(r#""abx""#, r#""abxx""#);
        assert!(RunConfig::from_json_str(&bad).is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut a = RunConfig::from_json_str(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        a.seed = 8;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn layer_ranges() {
        assert_eq!(parse_layer_range("0-3").unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(parse_layer_range("5").unwrap(), vec![5]);
        assert_eq!(parse_layer_range("1,4,7-8").unwrap(), vec![1, 4, 7, 8]);
        assert!(parse_layer_range("3-1").is_err());
        assert!(parse_layer_range("a").is_err());
        assert!(parse_layer_range("1,,2").is_err());
    }
}
