//! Quota sampling, speaker-held-out splits, per-type token sampling and ABX
//! triplet construction.

use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inventory::Contrast;
use crate::rng::{stable_hash, stream_rng};
use crate::store::{SegmentId, SegmentTable};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRow {
    pub segment: SegmentId,
    pub label: String,
    pub speaker_id: String,
    pub utterance_id: String,
}

impl SampleRow {
    fn from_table(table: &SegmentTable, i: usize) -> Self {
        let m = table.meta(i);
        SampleRow {
            segment: m.id.clone(),
            label: m.label.clone(),
            speaker_id: m.speaker_id.clone(),
            utterance_id: m.utterance_id.clone(),
        }
    }
}

/// A `(speaker, label)` group that had fewer tokens than the quota.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scarcity {
    pub speaker_id: String,
    pub label: String,
    pub available: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub rows: Vec<SampleRow>,
    pub quota: usize,
    pub seed: u64,
    pub scarcity: Vec<Scarcity>,
}

impl SampleSet {
    pub fn ids(&self) -> Vec<SegmentId> {
        self.rows.iter().map(|r| r.segment.clone()).collect()
    }

    pub fn speakers(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.speaker_id.as_str()).collect()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let header = SampleLine::Header {
            quota: self.quota,
            seed: self.seed,
            scarcity: self.scarcity.clone(),
        };
        let lines = std::iter::once(header).chain(self.rows.iter().cloned().map(SampleLine::Row));
        to_jsonl(lines)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut header = None;
        let mut rows = Vec::new();
        for line in from_jsonl::<SampleLine>(text)? {
            match line {
                SampleLine::Header { quota, seed, scarcity } if header.is_none() => {
                    header = Some((quota, seed, scarcity))
                }
                SampleLine::Header { .. } => {
                    return Err(Error::Format("sample set has more than one header".into()))
                }
                SampleLine::Row(r) => rows.push(r),
            }
        }
        let (quota, seed, scarcity) =
            header.ok_or_else(|| Error::Format("sample set has no header line".into()))?;
        Ok(SampleSet {
            rows,
            quota,
            seed,
            scarcity,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SampleLine {
    Header {
        quota: usize,
        seed: u64,
        scarcity: Vec<Scarcity>,
    },
    Row(SampleRow),
}

pub(crate) fn to_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(
            &serde_json::to_string(&item).map_err(|e| Error::Format(format!("serialize: {e}")))?,
        );
        out.push('\n');
    }
    Ok(out)
}

pub(crate) fn from_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Line {
                source_name: "jsonl".into(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Draws `min(quota, available)` tokens per `(speaker, label)` without
/// replacement. Each group uses its own seeded stream keyed by the group, so
/// the result is independent of thread count. Rows come in canonical order.
pub fn sample_occurrences(table: &SegmentTable, quota: usize, seed: u64) -> Result<SampleSet> {
    if quota == 0 {
        return Err(Error::Parameter("quota must be >= 1".into()));
    }
    let order = table.canonical_order();
    let mut groups: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for &i in &order {
        let m = table.meta(i);
        groups
            .entry((m.speaker_id.as_str(), m.label.as_str()))
            .or_default()
            .push(i);
    }
    let picked: Vec<(Vec<usize>, Option<Scarcity>)> = groups
        .par_iter()
        .map(|(&(speaker, label), members)| {
            if members.len() <= quota {
                let scarce = (members.len() < quota).then(|| Scarcity {
                    speaker_id: speaker.to_string(),
                    label: label.to_string(),
                    available: members.len(),
                });
                return (members.clone(), scarce);
            }
            let mut rng = stream_rng(seed, stable_hash(&[speaker, label]));
            let chosen = index::sample(&mut rng, members.len(), quota)
                .into_iter()
                .map(|k| members[k])
                .collect();
            (chosen, None)
        })
        .collect();

    let mut indices = Vec::new();
    let mut scarcity = Vec::new();
    for (chosen, scarce) in picked {
        indices.extend(chosen);
        scarcity.extend(scarce);
    }
    let mut rank = vec![0; table.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    indices.sort_unstable_by_key(|&i| rank[i]);
    Ok(SampleSet {
        rows: indices.into_iter().map(|i| SampleRow::from_table(table, i)).collect(),
        quota,
        seed,
        scarcity,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerSplit {
    pub train_speakers: BTreeSet<String>,
    pub test_speakers: BTreeSet<String>,
}

impl SpeakerSplit {
    pub fn is_train(&self, speaker: &str) -> bool {
        self.train_speakers.contains(speaker)
    }

    pub fn is_test(&self, speaker: &str) -> bool {
        self.test_speakers.contains(speaker)
    }

    /// Row indices of `table` on the train and test side. Rows of speakers in
    /// neither set are left out.
    pub fn partition(&self, table: &SegmentTable) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for i in table.canonical_order() {
            let m = table.meta(i);
            if self.is_train(&m.speaker_id) {
                train.push(i);
            } else if self.is_test(&m.speaker_id) {
                test.push(i);
            }
        }
        (train, test)
    }
}

/// Chooses `n_test` held-out speakers uniformly at random.
pub fn split_by_speaker(sample: &SampleSet, n_test: usize, seed: u64) -> Result<SpeakerSplit> {
    split_speakers(sample.speakers(), n_test, seed)
}

pub fn split_speakers<'a>(
    speakers: impl IntoIterator<Item = &'a str>,
    n_test: usize,
    seed: u64,
) -> Result<SpeakerSplit> {
    let mut speakers: Vec<&str> = speakers.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    if n_test == 0 || n_test >= speakers.len() {
        return Err(Error::Parameter(format!(
            "n_test must be in 1..{} for {} speakers, got {n_test}",
            speakers.len(),
            speakers.len()
        )));
    }
    let mut rng = stream_rng(seed, stable_hash(&["speaker-split"]));
    speakers.shuffle(&mut rng);
    let (test, train) = speakers.split_at(n_test);
    Ok(SpeakerSplit {
        train_speakers: train.iter().map(|s| s.to_string()).collect(),
        test_speakers: test.iter().map(|s| s.to_string()).collect(),
    })
}

/// Up to `max_per_type` tokens per type, each from a different speaker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeSample {
    pub tokens: Vec<SampleRow>,
    /// Requested types with no token in the table.
    pub absent: Vec<String>,
}

pub fn sample_types(
    table: &SegmentTable,
    types: &[String],
    max_per_type: usize,
    seed: u64,
) -> Result<TypeSample> {
    if max_per_type == 0 {
        return Err(Error::Parameter("max_per_type must be >= 1".into()));
    }
    let mut by_label: BTreeMap<&str, BTreeMap<&str, Vec<usize>>> = BTreeMap::new();
    for i in table.canonical_order() {
        let m = table.meta(i);
        by_label
            .entry(m.label.as_str())
            .or_default()
            .entry(m.speaker_id.as_str())
            .or_default()
            .push(i);
    }
    let mut seen = BTreeSet::new();
    let mut tokens = Vec::new();
    let mut absent = Vec::new();
    for ty in types {
        if !seen.insert(ty.as_str()) {
            continue;
        }
        let Some(speakers) = by_label.get(ty.as_str()) else {
            absent.push(ty.clone());
            continue;
        };
        let mut rng = stream_rng(seed, stable_hash(&["type", ty]));
        let mut order: Vec<&str> = speakers.keys().copied().collect();
        order.shuffle(&mut rng);
        order.truncate(max_per_type);
        order.sort_unstable();
        for spk in order {
            let members = &speakers[spk];
            let pick = members[rng.random_range(0..members.len())];
            tokens.push(SampleRow::from_table(table, pick));
        }
    }
    Ok(TypeSample { tokens, absent })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub a: SegmentId,
    pub b: SegmentId,
    pub x: SegmentId,
    pub contrast: Contrast,
    /// Category shared by A and X.
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastCoverage {
    pub contrast: Contrast,
    /// Valid candidate triplets with A/X from `contrast.left` and from `contrast.right`.
    pub candidates: [u64; 2],
    pub chosen: [usize; 2],
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
    pub per_contrast_cap: usize,
    pub seed: u64,
    pub coverage: Vec<ContrastCoverage>,
}

impl TripletSet {
    pub fn warnings(&self) -> Vec<String> {
        self.coverage
            .iter()
            .filter(|c| c.skipped)
            .map(|c| format!("contrast {} has no valid ABX triplets; skipped", c.contrast))
            .collect()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let header = TripletLine::Header {
            per_contrast_cap: self.per_contrast_cap,
            seed: self.seed,
            coverage: self.coverage.clone(),
        };
        to_jsonl(std::iter::once(header).chain(self.triplets.iter().cloned().map(TripletLine::Triplet)))
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut header = None;
        let mut triplets = Vec::new();
        for line in from_jsonl::<TripletLine>(text)? {
            match line {
                TripletLine::Header {
                    per_contrast_cap,
                    seed,
                    coverage,
                } if header.is_none() => header = Some((per_contrast_cap, seed, coverage)),
                TripletLine::Header { .. } => {
                    return Err(Error::Format("triplet set has more than one header".into()))
                }
                TripletLine::Triplet(t) => triplets.push(t),
            }
        }
        let (per_contrast_cap, seed, coverage) =
            header.ok_or_else(|| Error::Format("triplet set has no header line".into()))?;
        Ok(TripletSet {
            triplets,
            per_contrast_cap,
            seed,
            coverage,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TripletLine {
    Header {
        per_contrast_cap: usize,
        seed: u64,
        coverage: Vec<ContrastCoverage>,
    },
    Triplet(Triplet),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletConstraints {
    /// Also require A and X to differ in (previous, next) phone context.
    /// Only meaningful when phone tiers are complete.
    #[serde(default)]
    pub distinct_context: bool,
}

/// Lazily indexed candidate product for one orientation of a contrast: all
/// `(A, B, X)` with A, X from the target category and B from the other one.
struct Candidates<'t> {
    table: &'t SegmentTable,
    /// (a, x, offset of the first candidate of this pair)
    pairs: Vec<(usize, usize, u64)>,
    /// Other-category tokens grouped by speaker.
    others: Vec<(&'t str, Vec<usize>)>,
    total: u64,
}

impl<'t> Candidates<'t> {
    fn new(
        table: &'t SegmentTable,
        targets: &[usize],
        others: &[usize],
        constraints: TripletConstraints,
    ) -> Self {
        let mut grouped: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for &o in others {
            grouped.entry(table.meta(o).speaker_id.as_str()).or_default().push(o);
        }
        let n_others = others.len() as u64;
        let mut pairs = Vec::new();
        let mut total = 0u64;
        for &a in targets {
            let ma = table.meta(a);
            for &x in targets {
                let mx = table.meta(x);
                if a == x || ma.speaker_id == mx.speaker_id || ma.utterance_id == mx.utterance_id {
                    continue;
                }
                if constraints.distinct_context
                    && ma.prev_label == mx.prev_label
                    && ma.next_label == mx.next_label
                {
                    continue;
                }
                let excluded = grouped.get(ma.speaker_id.as_str()).map_or(0, Vec::len)
                    + grouped.get(mx.speaker_id.as_str()).map_or(0, Vec::len);
                let weight = n_others - excluded as u64;
                if weight > 0 {
                    pairs.push((a, x, total));
                    total += weight;
                }
            }
        }
        Candidates {
            table,
            pairs,
            others: grouped.into_iter().collect(),
            total,
        }
    }

    fn get(&self, k: u64) -> (usize, usize, usize) {
        let p = self.pairs.partition_point(|&(_, _, start)| start <= k) - 1;
        let (a, x, start) = self.pairs[p];
        let sa = self.table.meta(a).speaker_id.as_str();
        let sx = self.table.meta(x).speaker_id.as_str();
        let mut rest = (k - start) as usize;
        for (spk, members) in &self.others {
            if *spk == sa || *spk == sx {
                continue;
            }
            if rest < members.len() {
                return (a, members[rest], x);
            }
            rest -= members.len();
        }
        unreachable!("candidate index {k} out of range")
    }

    fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<(usize, usize, usize)> {
        let mut ks: Vec<u64> = if n as u64 == self.total {
            (0..self.total).collect()
        } else if let Ok(len) = usize::try_from(self.total) {
            index::sample(rng, len, n).into_iter().map(|k| k as u64).collect()
        } else {
            let mut set = BTreeSet::new();
            while set.len() < n {
                set.insert(rng.random_range(0..self.total));
            }
            set.into_iter().collect()
        };
        ks.sort_unstable();
        ks.into_iter().map(|k| self.get(k)).collect()
    }
}

/// Splits `cap` across the two orientations so that they differ by at most
/// one while using as many candidates as possible.
fn balanced_counts(cap: usize, c: [u64; 2]) -> [usize; 2] {
    let avail = c.map(|v| usize::try_from(v).unwrap_or(usize::MAX));
    let base = (cap / 2).min(avail[0]).min(avail[1]);
    let mut n = [base, base];
    if n[0] + n[1] < cap {
        if n[0] < avail[0] {
            n[0] += 1;
        } else if n[1] < avail[1] {
            n[1] += 1;
        }
    }
    n
}

pub fn build_abx_triplets(
    table: &SegmentTable,
    contrasts: &[Contrast],
    cap: usize,
    seed: u64,
) -> Result<TripletSet> {
    build_abx_triplets_with(table, contrasts, cap, seed, TripletConstraints::default())
}

/// Samples up to `cap` triplets per contrast without replacement from the
/// candidate product. Constraints: speakers of A, B, X pairwise distinct,
/// A and X from different utterances, both orientations within one of each
/// other. Contrasts are processed in parallel and merged in input order.
pub fn build_abx_triplets_with(
    table: &SegmentTable,
    contrasts: &[Contrast],
    cap: usize,
    seed: u64,
    constraints: TripletConstraints,
) -> Result<TripletSet> {
    if cap == 0 {
        return Err(Error::Parameter("triplet cap must be >= 1".into()));
    }
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for i in table.canonical_order() {
        by_label.entry(table.meta(i).label.as_str()).or_default().push(i);
    }
    let empty = Vec::new();
    let per_contrast: Vec<(Vec<Triplet>, ContrastCoverage)> = contrasts
        .par_iter()
        .map(|contrast| {
            let left = by_label.get(contrast.left.as_str()).unwrap_or(&empty);
            let right = by_label.get(contrast.right.as_str()).unwrap_or(&empty);
            let sides = [
                Candidates::new(table, left, right, constraints),
                Candidates::new(table, right, left, constraints),
            ];
            let candidates = [sides[0].total, sides[1].total];
            let chosen = balanced_counts(cap, candidates);
            let mut triplets = Vec::with_capacity(chosen[0] + chosen[1]);
            for (side, (cands, &n)) in sides.iter().zip(&chosen).enumerate() {
                let target = if side == 0 { &contrast.left } else { &contrast.right };
                let mut rng = stream_rng(
                    seed,
                    stable_hash(&[&contrast.left, &contrast.right, &side.to_string()]),
                );
                for (a, b, x) in cands.sample(n, &mut rng) {
                    triplets.push(Triplet {
                        a: table.meta(a).id.clone(),
                        b: table.meta(b).id.clone(),
                        x: table.meta(x).id.clone(),
                        contrast: contrast.clone(),
                        target: target.clone(),
                    });
                }
            }
            let coverage = ContrastCoverage {
                contrast: contrast.clone(),
                candidates,
                chosen,
                skipped: triplets.is_empty(),
            };
            (triplets, coverage)
        })
        .collect();

    let mut set = TripletSet {
        triplets: Vec::new(),
        per_contrast_cap: cap,
        seed,
        coverage: Vec::new(),
    };
    for (triplets, coverage) in per_contrast {
        if coverage.skipped {
            debug!("contrast {} has no valid ABX triplets; skipped", coverage.contrast);
        }
        set.triplets.extend(triplets);
        set.coverage.push(coverage);
    }
    Ok(set)
}
