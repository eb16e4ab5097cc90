//! Tab-separated alignment files.
//!
//! One record per line: `utterance_id  speaker_id  tier  label  start_s  end_s`.
//! Blank lines and lines starting with `#` are ignored.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Phone,
    Word,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Phone => "phone",
            Tier::Word => "word",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "phone" => Ok(Tier::Phone),
            "word" => Ok(Tier::Word),
            other => Err(format!("unknown tier {other:?} (expected phone or word)")),
        }
    }
}

/// One aligned phone or word token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub tier: Tier,
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
}

/// Parses alignment TSV text. `source_name` is used in error messages.
pub fn parse_alignments(text: &str, source_name: &str) -> Result<Vec<SegmentRecord>> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Line {
            source_name: source_name.to_string(),
            line: idx + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(err(format!("expected 6 tab-separated fields, found {}", fields.len())));
        }
        let [utt, spk, tier, label, start, end] = [0, 1, 2, 3, 4, 5].map(|i| fields[i].trim());
        if utt.is_empty() || spk.is_empty() {
            return Err(err("empty utterance or speaker id".into()));
        }
        if label.is_empty() {
            return Err(err("empty label".into()));
        }
        let tier: Tier = tier.parse().map_err(err)?;
        let parse_time = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s
                .parse()
                .map_err(|_| err(format!("invalid {what} time {s:?}")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(err(format!("{what} time must be finite and >= 0, got {s}")));
            }
            Ok(v)
        };
        let start_s = parse_time(start, "start")?;
        let end_s = parse_time(end, "end")?;
        if end_s <= start_s {
            return Err(err(format!("end {end_s} must be greater than start {start_s}")));
        }
        records.push(SegmentRecord {
            utterance_id: utt.to_string(),
            speaker_id: spk.to_string(),
            tier,
            label: label.to_string(),
            start_s,
            end_s,
        });
    }
    Ok(records)
}

pub fn load_alignments(path: &Path) -> Result<Vec<SegmentRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_alignments(&text, &path.display().to_string())
}
