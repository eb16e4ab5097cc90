use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::bootstrap::BootstrapConfig;
use crate::store::Tier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Probe,
    Abx,
    ClusterPca,
    ClusterLda,
    Rsa,
}

impl Analysis {
    pub const ALL: [Analysis; 5] = [
        Analysis::Probe,
        Analysis::Abx,
        Analysis::ClusterPca,
        Analysis::ClusterLda,
        Analysis::Rsa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Analysis::Probe => "probe",
            Analysis::Abx => "abx",
            Analysis::ClusterPca => "cluster_pca",
            Analysis::ClusterLda => "cluster_lda",
            Analysis::Rsa => "rsa",
        }
    }

    /// Chance level of the measure, where one is defined.
    pub fn chance_level(self, n_classes: Option<usize>) -> Option<f64> {
        match self {
            Analysis::Probe => n_classes.filter(|&c| c > 0).map(|c| 1.0 / c as f64),
            Analysis::Abx => Some(0.5),
            _ => None,
        }
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Analysis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Analysis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                format!("unknown analysis {s:?} (expected probe, abx, cluster_pca, cluster_lda or rsa)")
            })
    }
}

/// Shared settings for one analysis run: identifiers echoed into every
/// result and the bootstrap used for confidence intervals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalysisContext {
    pub dataset: String,
    pub model: String,
    pub bootstrap: BootstrapConfig,
    pub seeds: BTreeMap<String, u64>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastScore {
    pub contrast: String,
    pub value: f64,
    pub n_triplets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMetadata {
    pub dataset: String,
    pub model: String,
    pub config_hash: String,
    pub toolkit_version: String,
    pub seeds: BTreeMap<String, u64>,
    pub hyperparameters: BTreeMap<String, Value>,
    pub ci_method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train_speakers: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test_speakers: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ResultMetadata {
    pub(crate) fn new(ctx: &AnalysisContext, ci_method: &str) -> Self {
        let mut hyperparameters = BTreeMap::new();
        hyperparameters.insert("bootstrap_resamples".into(), Value::from(ctx.bootstrap.n_resamples));
        hyperparameters.insert("bootstrap_alpha".into(), Value::from(ctx.bootstrap.alpha));
        let mut seeds = ctx.seeds.clone();
        seeds.insert("bootstrap".into(), ctx.bootstrap.seed);
        ResultMetadata {
            dataset: ctx.dataset.clone(),
            model: ctx.model.clone(),
            config_hash: ctx.config_hash.clone(),
            toolkit_version: crate::VERSION.to_string(),
            seeds,
            hyperparameters,
            ci_method: ci_method.to_string(),
            n_classes: None,
            train_speakers: Vec::new(),
            test_speakers: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub(crate) fn param(&mut self, key: &str, value: impl Into<Value>) {
        self.hyperparameters.insert(key.to_string(), value.into());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerwiseResult {
    pub analysis: Analysis,
    pub tier: Tier,
    pub layer: u32,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_items: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_item_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_contrast: Option<Vec<ContrastScore>>,
    pub metadata: ResultMetadata,
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    let pivot = v[0];
    pivot + v.iter().map(|x| x - pivot).sum::<f64>() / v.len() as f64
}

/// Percentile intervals of a mean can miss the point estimate by a hair on
/// skewed data; widen to include it.
pub(crate) fn enclose(value: f64, (lo, hi): (f64, f64)) -> (f64, f64) {
    (lo.min(value), hi.max(value))
}
