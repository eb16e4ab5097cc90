use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use layerscope::store::{
    build_segment_table, load_alignments, read_frame_matrix, write_frame_matrix, CorpusManifest,
    FrameMatrix, Tier,
};
use layerscope::synth::{write_desk_corpus, DeskSpec};
use layerscope::{Error, ErrorKind};

fn desk_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/desk")
}

#[test]
fn bundled_desk_corpus_matches_generator() {
    let tmp = tempfile::tempdir().unwrap();
    write_desk_corpus(tmp.path(), &DeskSpec::default()).unwrap();
    let mut n = 0;
    for entry in fs::read_dir(tmp.path()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap();
        let bundled = fs::read(desk_dir().join(name)).unwrap();
        assert!(fs::read(&path).unwrap() == bundled, "{name:?} differs");
        n += 1;
    }
    assert!(n > 30);
}

#[test]
fn one_row_per_aligned_segment() {
    let manifest = CorpusManifest::load(&desk_dir().join("manifest.json")).unwrap();
    let mut counts: BTreeMap<Tier, usize> = BTreeMap::new();
    for u in &manifest.utterances {
        for r in load_alignments(&u.alignment).unwrap() {
            *counts.entry(r.tier).or_default() += 1;
        }
    }
    for tier in [Tier::Phone, Tier::Word] {
        for &layer in &manifest.layers {
            let built = build_segment_table(&manifest, tier, layer).unwrap();
            assert_eq!(built.table.len(), counts[&tier], "{tier} layer {layer}");
            assert!(built.warnings.is_empty());
            assert_eq!(built.table.dim(), 6);
        }
    }
}

#[test]
fn rows_ordered_by_utterance_then_start() {
    let manifest = CorpusManifest::load(&desk_dir().join("manifest.json")).unwrap();
    let t = build_segment_table(&manifest, Tier::Phone, 1).unwrap().table;
    let keys: Vec<(&str, f64)> = t.rows().iter().map(|m| (m.utterance_id.as_str(), m.start_s)).collect();
    assert!(keys.windows(2).all(|w| w[0].0 < w[1].0 || (w[0].0 == w[1].0 && w[0].1 <= w[1].1)));
    let first = t.meta(0);
    assert_eq!(first.prev_label, None);
    assert_eq!(t.meta(1).prev_label.as_deref(), Some(first.label.as_str()));
}

/// A one-utterance corpus with hand-written frames and alignment.
fn tiny_corpus(dir: &Path, alignment: &str, frames: &[Vec<f64>]) -> CorpusManifest {
    write_frame_matrix(&FrameMatrix::from_rows(0, frames).unwrap(), &dir.join("u1_L0.emb")).unwrap();
    fs::write(dir.join("u1.tsv"), alignment).unwrap();
    let manifest = r#"{"dataset_name": "tiny", "layers": [0], "utterances": [
        {"utterance_id": "u1", "speaker_id": "s1", "duration_s": 0.1,
         "embeddings": {"0": "u1_L0.emb"}, "alignment": "u1.tsv"}]}"#;
    fs::write(dir.join("manifest.json"), manifest).unwrap();
    CorpusManifest::load(&dir.join("manifest.json")).unwrap()
}

#[test]
fn word_tier_missing_gives_empty_table_and_warning() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = vec![vec![1.0, 0.0], vec![3.0, 2.0], vec![5.0, 4.0]];
    let m = tiny_corpus(tmp.path(), "u1\ts1\tphone\ta:\t0.00\t0.04\n", &frames);
    let built = build_segment_table(&m, Tier::Word, 0).unwrap();
    assert!(built.table.is_empty());
    assert_eq!(built.warnings.len(), 1);
    let phones = build_segment_table(&m, Tier::Phone, 0).unwrap().table;
    assert_eq!(phones.embedding(0), &[2.0, 1.0]);
}

#[test]
fn spans_clamp_to_matrix_end() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = vec![vec![1.0], vec![2.0], vec![4.0]];
    // 0.04..0.20 covers frames 2..10 nominally; only frame 2 exists
    let m = tiny_corpus(tmp.path(), "u1\ts1\tphone\tb\t0.04\t0.20\n", &frames);
    let t = build_segment_table(&m, Tier::Phone, 0).unwrap().table;
    assert_eq!(t.embedding(0), &[4.0]);
}

#[test]
fn segment_past_end_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = vec![vec![1.0], vec![2.0]];
    let m = tiny_corpus(tmp.path(), "u1\ts1\tphone\tb\t0.30\t0.40\n", &frames);
    let err = build_segment_table(&m, Tier::Phone, 0).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data);
}

#[test]
fn speaker_mismatch_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = vec![vec![1.0], vec![2.0]];
    let m = tiny_corpus(tmp.path(), "u1\ts2\tphone\tb\t0.00\t0.02\n", &frames);
    assert!(matches!(build_segment_table(&m, Tier::Phone, 0), Err(Error::Validation(_))));
}

#[test]
fn corrupt_embedding_reported_with_utterance() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = vec![vec![1.0], vec![2.0]];
    let m = tiny_corpus(tmp.path(), "u1\ts1\tphone\tb\t0.00\t0.02\n", &frames);
    let path = tmp.path().join("u1_L0.emb");
    let mut bytes = fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 2);
    fs::write(&path, bytes).unwrap();
    assert!(read_frame_matrix(&path).is_err());
    let err = build_segment_table(&m, Tier::Phone, 0).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data);
    assert!(err.to_string().contains("u1"), "{err}");
}
