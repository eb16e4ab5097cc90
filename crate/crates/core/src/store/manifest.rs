use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FRAME_HOP_S: f64 = 0.02;

fn default_hop() -> f64 {
    DEFAULT_FRAME_HOP_S
}

/// One utterance entry of a [`CorpusManifest`]. Relative paths are resolved
/// against the manifest's directory by [`CorpusManifest::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceEntry {
    pub utterance_id: String,
    pub speaker_id: String,
    pub duration_s: f64,
    /// Layer id → EMB1 file.
    pub embeddings: BTreeMap<u32, PathBuf>,
    pub alignment: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub dataset_name: String,
    #[serde(default = "default_hop")]
    pub frame_hop_s: f64,
    pub layers: Vec<u32>,
    pub utterances: Vec<UtteranceEntry>,
}

impl CorpusManifest {
    /// Parses and structurally validates a manifest without touching the
    /// filesystem.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let manifest: CorpusManifest =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset_name.is_empty() {
            return Err(Error::Validation("manifest dataset_name is empty".into()));
        }
        if !(self.frame_hop_s.is_finite() && self.frame_hop_s > 0.0) {
            return Err(Error::Validation(format!(
                "frame_hop_s must be > 0, got {}",
                self.frame_hop_s
            )));
        }
        if self.layers.is_empty() {
            return Err(Error::Validation("manifest layer list is empty".into()));
        }
        let layers: BTreeSet<u32> = self.layers.iter().copied().collect();
        if layers.len() != self.layers.len() {
            return Err(Error::Validation("manifest layer list has duplicates".into()));
        }
        let mut seen = BTreeSet::new();
        for utt in &self.utterances {
            if utt.utterance_id.is_empty() {
                return Err(Error::Validation("empty utterance_id in manifest".into()));
            }
            if !seen.insert(utt.utterance_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate utterance {} in manifest",
                    utt.utterance_id
                )));
            }
            if !(utt.duration_s.is_finite() && utt.duration_s >= 0.0) {
                return Err(Error::Validation(format!(
                    "utterance {} has invalid duration {}",
                    utt.utterance_id, utt.duration_s
                )));
            }
            for layer in &layers {
                if !utt.embeddings.contains_key(layer) {
                    return Err(Error::Validation(format!(
                        "utterance {} has no embedding path for layer {layer}",
                        utt.utterance_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Loads a manifest, resolves relative paths against its directory and
    /// checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest = Self::from_json_str(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        manifest.resolve_paths(base);
        manifest.check_paths_exist()?;
        Ok(manifest)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for utt in &mut self.utterances {
            if utt.alignment.is_relative() {
                utt.alignment = base.join(&utt.alignment);
            }
            for p in utt.embeddings.values_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn check_paths_exist(&self) -> Result<()> {
        for utt in &self.utterances {
            let paths = std::iter::once(&utt.alignment).chain(utt.embeddings.values());
            for p in paths {
                if !p.is_file() {
                    return Err(Error::Validation(format!(
                        "utterance {}: referenced file {} does not exist",
                        utt.utterance_id,
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn speakers(&self) -> BTreeSet<&str> {
        self.utterances.iter().map(|u| u.speaker_id.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dataset_name": "desk",
        "layers": [0, 1],
        "utterances": [
            {"utterance_id": "u1", "speaker_id": "s1", "duration_s": 1.0,
             "embeddings": {"0": "u1_L0.emb", "1": "u1_L1.emb"}, "alignment": "u1.tsv"}
        ]
    }"#;

    #[test]
    fn parses_with_default_hop() {
        let m = CorpusManifest::from_json_str(MINIMAL).unwrap();
        assert_eq!(m.frame_hop_s, 0.02);
        assert_eq!(m.layers, vec![0, 1]);
        assert_eq!(m.utterances[0].embeddings[&1], PathBuf::from("u1_L1.emb"));
    }

    #[test]
    fn rejects_missing_layer_path() {
        let text = MINIMAL.replace(r#", "1": "u1_L1.emb""#, "");
        assert!(matches!(
            CorpusManifest::from_json_str(&text),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn rejects_bad_hop_and_empty_layers() {
        let text = MINIMAL.replace(r#""layers""#, r#""frame_hop_s": 0, "layers""#);
        assert!(CorpusManifest::from_json_str(&text).is_err());
        let text = MINIMAL.replace("[0, 1]", "[]");
        assert!(CorpusManifest::from_json_str(&text).is_err());
    }

    #[test]
    fn load_checks_existence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        fs::write(&path, MINIMAL).unwrap();
        assert!(matches!(CorpusManifest::load(&path), Err(Error::Validation(_))));
        for f in ["u1_L0.emb", "u1_L1.emb", "u1.tsv"] {
            fs::write(dir.path().join(f), b"").unwrap();
        }
        let m = CorpusManifest::load(&path).unwrap();
        assert_eq!(m.utterances[0].alignment, dir.path().join("u1.tsv"));
    }
}
