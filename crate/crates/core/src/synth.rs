//! Synthetic desk corpora: EMB1 frame matrices, phone and word alignments, a
//! manifest, a vocabulary list and reference word vectors, all generated
//! from a seed. Used for smoke tests and determinism checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inventory::PhoneInventory;
use crate::rng::stream_rng;
use crate::store::{write_frame_matrix, CorpusManifest, FrameMatrix, UtteranceEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskSpec {
    pub dataset_name: String,
    pub speakers: usize,
    pub utterances_per_speaker: usize,
    pub words_per_utterance: usize,
    pub vocabulary_size: usize,
    pub layers: Vec<u32>,
    pub dim: usize,
    pub reference_dim: usize,
    pub frame_hop_s: f64,
    pub seed: u64,
}

impl Default for DeskSpec {
    fn default() -> Self {
        DeskSpec {
            dataset_name: "desk".into(),
            speakers: 3,
            utterances_per_speaker: 3,
            words_per_utterance: 12,
            vocabulary_size: 10,
            layers: vec![0, 1, 2],
            dim: 6,
            reference_dim: 5,
            frame_hop_s: 0.02,
            seed: 20_240_901,
        }
    }
}

fn gaussian_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Strength of the phone-identity signal in layer `i` of `n`: rises to a
/// peak two thirds of the way up, then falls off.
fn layer_signal(i: usize, n: usize) -> f64 {
    let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 1.0 };
    1.0 + 3.0 * (-(t - 0.66f64).powi(2) / 0.1).exp()
}

/// Writes a desk corpus into `dir` and returns the manifest path. Output is
/// a pure function of `spec`.
pub fn write_desk_corpus(dir: &Path, spec: &DeskSpec) -> Result<PathBuf> {
    if spec.speakers == 0 || spec.utterances_per_speaker == 0 || spec.vocabulary_size == 0 {
        return Err(Error::Parameter("desk corpus needs speakers, utterances and words".into()));
    }
    if spec.layers.is_empty() || spec.dim == 0 || spec.reference_dim == 0 {
        return Err(Error::Parameter("desk corpus needs layers and positive dims".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let inventory = PhoneInventory::dutch_default();
    let phones = inventory.categories();
    let mut rng = stream_rng(spec.seed, 0);

    let phone_means: BTreeMap<&str, Vec<f64>> =
        phones.iter().map(|p| (p.as_str(), gaussian_vec(&mut rng, spec.dim))).collect();
    let words: Vec<(String, Vec<&str>)> = (0..spec.vocabulary_size)
        .map(|w| {
            let len = rng.random_range(2..=4);
            let seq = (0..len).map(|_| phones.choose(&mut rng).unwrap().as_str()).collect();
            (format!("w{w:02}"), seq)
        })
        .collect();
    let speaker_offsets: Vec<Vec<f64>> = (0..spec.speakers)
        .map(|_| gaussian_vec(&mut rng, spec.dim).into_iter().map(|v| 0.3 * v).collect())
        .collect();

    let mut utterances = Vec::new();
    for s in 0..spec.speakers {
        let speaker = format!("spk{}", s + 1);
        for u in 0..spec.utterances_per_speaker {
            let utt = format!("{speaker}_u{}", u + 1);
            let mut tsv = String::from("# utterance\tspeaker\ttier\tlabel\tstart_s\tend_s\n");
            // (phone, frames) in order
            let mut segments: Vec<(&str, usize)> = Vec::new();
            let mut frame = 0usize;
            for _ in 0..spec.words_per_utterance {
                let (word, seq) = words.choose(&mut rng).unwrap();
                let word_start = frame;
                for &p in seq {
                    let n = rng.random_range(3..=7);
                    let _ = writeln!(
                        tsv,
                        "{utt}\t{speaker}\tphone\t{p}\t{:.2}\t{:.2}",
                        frame as f64 * spec.frame_hop_s,
                        (frame + n) as f64 * spec.frame_hop_s
                    );
                    segments.push((p, n));
                    frame += n;
                }
                let _ = writeln!(
                    tsv,
                    "{utt}\t{speaker}\tword\t{word}\t{:.2}\t{:.2}",
                    word_start as f64 * spec.frame_hop_s,
                    frame as f64 * spec.frame_hop_s
                );
            }
            let num_frames = frame;
            let align_name = format!("{utt}.tsv");
            fs::write(dir.join(&align_name), tsv).map_err(|e| Error::io(dir.join(&align_name), e))?;

            let mut embeddings = BTreeMap::new();
            for (li, &layer) in spec.layers.iter().enumerate() {
                let signal = layer_signal(li, spec.layers.len());
                let mut rows = Vec::with_capacity(num_frames);
                for &(p, n) in &segments {
                    for _ in 0..n {
                        let noise = gaussian_vec(&mut rng, spec.dim);
                        rows.push(
                            (0..spec.dim)
                                .map(|d| signal * phone_means[p][d] + speaker_offsets[s][d] + noise[d])
                                .collect::<Vec<f64>>(),
                        );
                    }
                }
                let name = format!("{utt}_L{layer}.emb");
                write_frame_matrix(&FrameMatrix::from_rows(layer, &rows)?, &dir.join(&name))?;
                embeddings.insert(layer, PathBuf::from(name));
            }
            utterances.push(UtteranceEntry {
                utterance_id: utt,
                speaker_id: speaker.clone(),
                duration_s: num_frames as f64 * spec.frame_hop_s,
                embeddings,
                alignment: PathBuf::from(align_name),
            });
        }
    }

    let manifest = CorpusManifest {
        dataset_name: spec.dataset_name.clone(),
        frame_hop_s: spec.frame_hop_s,
        layers: spec.layers.clone(),
        utterances,
    };
    let manifest_path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("serialize manifest: {e}")))?;
    fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;

    // reference vectors: a fixed random map of each word's phone composition
    let mixing: Vec<Vec<f64>> = (0..spec.reference_dim).map(|_| gaussian_vec(&mut rng, spec.dim)).collect();
    let mut vocab = String::new();
    let mut index = BTreeMap::new();
    let mut ref_rows = Vec::new();
    for (i, (word, seq)) in words.iter().enumerate() {
        let _ = writeln!(vocab, "{word}");
        index.insert(word.clone(), i);
        let mut composition = vec![0.0; spec.dim];
        for p in seq {
            for (c, m) in composition.iter_mut().zip(&phone_means[p]) {
                *c += m / seq.len() as f64;
            }
        }
        let noise = gaussian_vec(&mut rng, spec.reference_dim);
        ref_rows.push(
            mixing
                .iter()
                .zip(noise)
                .map(|(row, e)| row.iter().zip(&composition).map(|(a, b)| a * b).sum::<f64>() + 0.2 * e)
                .collect::<Vec<f64>>(),
        );
    }
    fs::write(dir.join("vocab.txt"), vocab).map_err(|e| Error::io(dir.join("vocab.txt"), e))?;
    write_frame_matrix(&FrameMatrix::from_rows(0, &ref_rows)?, &dir.join("reference.emb"))?;
    let index_text = serde_json::to_string_pretty(&index).expect("index serializes") + "\n";
    fs::write(dir.join("reference.json"), index_text).map_err(|e| Error::io(dir.join("reference.json"), e))?;
    Ok(manifest_path)
}
