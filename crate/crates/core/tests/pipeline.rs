use std::fs;
use std::path::Path;

use layerscope::config::RunConfig;
use layerscope::metrics::Analysis;
use layerscope::pipeline::{pool_dataset, run};
use layerscope::report::{results_from_jsonl, results_to_csv, results_to_jsonl};
use layerscope::store::{write_frame_matrix, FrameMatrix, Tier};
use layerscope::synth::{write_desk_corpus, DeskSpec};
use layerscope::ErrorKind;

fn corpus(dir: &Path, speakers: usize) {
    let spec = DeskSpec {
        speakers,
        ..DeskSpec::default()
    };
    write_desk_corpus(dir, &spec).unwrap();
}

fn config(dir: &Path, extra: &str) -> RunConfig {
    let text = format!(
        r#"{{"model": "synthetic", "seed": 3, "bootstrap": {{"n_resamples": 100}},
        "datasets": [{{"name": "desk", "manifest": "manifest.json", "n_test_speakers": 1,
          "triplet_cap": 50, "vocab": "vocab.txt", "reference_vectors": "reference.emb",
          "reference_index": "reference.json", "word_test_speakers": 2 {extra}}}]}}"#
    );
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    RunConfig::load(&path).unwrap()
}

#[test]
fn every_row_carries_hash_and_version() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 3);
    let cfg = config(tmp.path(), "");
    let out = run(&cfg, None, true).unwrap();
    assert!(out.failures.is_empty());
    assert_eq!(out.results.len(), 5 * 3);
    for r in &out.results {
        assert_eq!(r.metadata.config_hash, cfg.hash());
        assert_eq!(r.metadata.toolkit_version, layerscope::VERSION);
        assert!(r.ci_low <= r.value && r.value <= r.ci_high);
        assert!(r.per_item_scores.is_none());
    }
    let csv = results_to_csv(&out.results).unwrap();
    assert!(csv.starts_with("dataset,model,analysis,tier,layer,value,ci_low,ci_high,n_items,"));
    let back = results_from_jsonl(&results_to_jsonl(&out.results).unwrap()).unwrap();
    assert_eq!(back, out.results);
}

#[test]
fn layer_and_analysis_selection() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 3);
    let mut cfg = config(tmp.path(), "");
    cfg.layers = Some(vec![2]);
    cfg.analyses = vec![Analysis::Probe];
    cfg.keep_item_scores = true;
    let out = run(&cfg, None, true).unwrap();
    assert_eq!(out.results.len(), 1);
    let r = &out.results[0];
    assert_eq!((r.analysis, r.layer), (Analysis::Probe, 2));
    assert_eq!(r.per_item_scores.as_ref().map(Vec::len), Some(r.n_items));
}

#[test]
fn failing_analysis_does_not_stop_others() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 3);
    // reference vectors for no vocabulary word: RSA has nothing to compare
    write_frame_matrix(&FrameMatrix::from_rows(0, &[vec![1.0, 2.0]]).unwrap(), &tmp.path().join("reference.emb")).unwrap();
    fs::write(tmp.path().join("reference.json"), r#"{"zzz": 0}"#).unwrap();
    let cfg = config(tmp.path(), "");
    let out = run(&cfg, None, false).unwrap();
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].stage, "rsa");
    assert_eq!(out.failures[0].kind, ErrorKind::Data);
    assert_eq!(out.results.len(), 4 * 3);
    assert!(run(&cfg, None, true).is_err());
}

#[test]
fn word_tier_clustering() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 6);
    let mut cfg = config(tmp.path(), r#", "cluster_tiers": ["phone", "word"], "word_k": 49"#);
    cfg.analyses = vec![Analysis::ClusterPca, Analysis::ClusterLda];
    let out = run(&cfg, None, true).unwrap();
    let word: Vec<_> = out.results.iter().filter(|r| r.tier == Tier::Word).collect();
    assert_eq!(word.len(), 2 * 3);
    for r in word {
        assert!(r.value.is_finite() && r.n_items >= 10);
        // 10 word types leave at most 9 LDA dimensions
        assert!(r.metadata.warnings.iter().any(|w| w.contains("lowered from 49")));
    }
}

#[test]
fn corrupted_cache_is_rebuilt() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 3);
    let cfg = config(tmp.path(), "");
    let cache = tmp.path().join("cache");
    let ds = &cfg.datasets[0];
    let first = pool_dataset(&cfg, ds, Some(&cache)).unwrap();
    let segt = cache.join("desk/phone_L1.segt");
    let bytes = fs::read(&segt).unwrap();
    fs::write(&segt, &bytes[..bytes.len() / 2]).unwrap();
    let second = pool_dataset(&cfg, ds, Some(&cache)).unwrap();
    assert!(second.warnings.iter().any(|w| w.contains("unreadable")), "{:?}", second.warnings);
    assert_eq!(first.phone, second.phone);
    assert_eq!(fs::read(&segt).unwrap(), bytes);
    let third = pool_dataset(&cfg, ds, Some(&cache)).unwrap();
    assert!(third.warnings.is_empty());
}

#[test]
fn cache_follows_input_changes() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 3);
    let cfg = config(tmp.path(), "");
    let cache = tmp.path().join("cache");
    let ds = &cfg.datasets[0];
    let before = pool_dataset(&cfg, ds, Some(&cache)).unwrap();
    let emb = tmp.path().join("spk1_u1_L0.emb");
    let m = layerscope::store::read_frame_matrix(&emb).unwrap();
    let rows: Vec<Vec<f64>> = (0..m.num_frames()).map(|i| m.row(i).iter().map(|v| *v as f64 + 1.0).collect()).collect();
    write_frame_matrix(&FrameMatrix::from_rows(0, &rows).unwrap(), &emb).unwrap();
    let after = pool_dataset(&cfg, ds, Some(&cache)).unwrap();
    assert_ne!(before.phone[0], after.phone[0]);
    assert_eq!(before.phone[1], after.phone[1]);
}

#[test]
fn unknown_layer_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 3);
    let mut cfg = config(tmp.path(), "");
    cfg.layers = Some(vec![7]);
    assert_eq!(run(&cfg, None, false).unwrap_err().kind(), ErrorKind::Config);
}
