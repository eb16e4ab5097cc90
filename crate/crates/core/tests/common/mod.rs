#![allow(dead_code)]

use std::collections::BTreeMap;

use layerscope::store::{SegmentId, SegmentMeta, SegmentTable, Tier};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// One token: utterance, speaker, label, embedding.
pub type Token = (String, String, String, Vec<f64>);

pub fn table(tier: Tier, layer: u32, tokens: &[Token]) -> SegmentTable {
    let dim = tokens.first().map_or(1, |t| t.3.len());
    let mut ranks: BTreeMap<&str, usize> = BTreeMap::new();
    let mut rows = Vec::with_capacity(tokens.len());
    let mut data = Vec::with_capacity(tokens.len() * dim);
    for (utt, spk, label, v) in tokens {
        let r = ranks.entry(utt).or_default();
        rows.push(SegmentMeta {
            id: SegmentId::new(utt, *r),
            utterance_id: utt.clone(),
            speaker_id: spk.clone(),
            label: label.clone(),
            start_s: *r as f64 * 0.1,
            end_s: *r as f64 * 0.1 + 0.08,
            prev_label: None,
            next_label: None,
        });
        *r += 1;
        data.extend(v);
    }
    SegmentTable::new(tier, layer, dim, rows, data).unwrap()
}

pub fn gaussian(rng: &mut impl Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    }).collect()
}

pub fn speaker(i: usize) -> String {
    format!("spk{i:02}")
}
