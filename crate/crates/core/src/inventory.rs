//! Phone inventory and phoneme contrast lists.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_INVENTORY: &str = include_str!("../data/inventory_nl.txt");
pub const DEFAULT_CONTRASTS: &str = include_str!("../data/contrasts_nl.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhoneClass {
    Vowel,
    Diphthong,
    Consonant,
}

impl FromStr for PhoneClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "vowel" => Ok(PhoneClass::Vowel),
            "diphthong" => Ok(PhoneClass::Diphthong),
            "consonant" => Ok(PhoneClass::Consonant),
            other => Err(format!("unknown phone class {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneInventory {
    categories: Vec<String>,
    class_of: BTreeMap<String, PhoneClass>,
}

impl PhoneInventory {
    /// Parses `label class` lines; `#` starts a comment line.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut categories = Vec::new();
        let mut class_of = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Line {
                source_name: source_name.to_string(),
                line: idx + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [label, class] = fields[..] else {
                return Err(err(format!("expected `label class`, got {line:?}")));
            };
            let class: PhoneClass = class.parse().map_err(err)?;
            if class_of.insert(label.to_string(), class).is_some() {
                return Err(err(format!("duplicate label {label:?}")));
            }
            categories.push(label.to_string());
        }
        if categories.is_empty() {
            return Err(Error::Validation(format!("{source_name}: empty phone inventory")));
        }
        Ok(PhoneInventory {
            categories,
            class_of,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// The 37-category Dutch inventory shipped with the crate.
    pub fn dutch_default() -> Self {
        Self::parse(DEFAULT_INVENTORY, "inventory_nl.txt").expect("bundled inventory is valid")
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.class_of.contains_key(label)
    }

    pub fn class_of(&self, label: &str) -> Option<PhoneClass> {
        self.class_of.get(label).copied()
    }

    pub fn count_class(&self, class: PhoneClass) -> usize {
        self.class_of.values().filter(|&&c| c == class).count()
    }
}

/// Unordered pair of distinct phone labels, stored with `left < right`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Contrast {
    pub left: String,
    pub right: String,
}

impl Contrast {
    pub fn new(a: &str, b: &str) -> Result<Self> {
        if a == b {
            return Err(Error::Validation(format!("contrast of {a:?} with itself")));
        }
        let (left, right) = if a < b { (a, b) } else { (b, a) };
        Ok(Contrast {
            left: left.to_string(),
            right: right.to_string(),
        })
    }
}

impl fmt::Display for Contrast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}~{}", self.left, self.right)
    }
}

/// Parses a contrast list (two labels per line), normalizing and dropping
/// duplicates while keeping first-seen order.
pub fn parse_contrasts(text: &str, source_name: &str, inventory: &PhoneInventory) -> Result<Vec<Contrast>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Line {
            source_name: source_name.to_string(),
            line: idx + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [a, b] = fields[..] else {
            return Err(err(format!("expected two labels, got {line:?}")));
        };
        for label in [a, b] {
            if !inventory.contains(label) {
                return Err(err(format!("label {label:?} is not in the phone inventory")));
            }
        }
        let contrast = Contrast::new(a, b).map_err(|e| err(e.to_string()))?;
        if seen.insert(contrast.clone()) {
            out.push(contrast);
        }
    }
    Ok(out)
}

pub fn load_contrasts(path: &Path, inventory: &PhoneInventory) -> Result<Vec<Contrast>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_contrasts(&text, &path.display().to_string(), inventory)
}

pub fn dutch_default_contrasts(inventory: &PhoneInventory) -> Result<Vec<Contrast>> {
    parse_contrasts(DEFAULT_CONTRASTS, "contrasts_nl.txt", inventory)
}
