use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use layerscope::store::{read_frame_matrix, write_frame_matrix, FrameMatrix};

fn layerscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layerscope"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn synth(dir: &Path) -> String {
    let out = layerscope(&["synth", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("config.json").to_str().unwrap().to_string()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not json: {text}"))
}

#[test]
fn run_plot_report() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path());
    let out_dir = tmp.path().join("out");
    let out = layerscope(&["run", "--config", &config]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 3);
    assert_eq!(fs::read_to_string(out_dir.join("errors.json")).unwrap().trim(), "[]");
    assert!(out_dir.join("results.jsonl").is_file());

    let out = layerscope(&["plot", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let probe = fs::read_to_string(out_dir.join("plots/probe.svg")).unwrap();
    assert!(probe.starts_with("<svg") && probe.contains(r#"class="chance""#));
    let abx = fs::read_to_string(out_dir.join("plots/abx.svg")).unwrap();
    assert!(abx.contains("chance 0.5000"));
    let rsa = fs::read_to_string(out_dir.join("plots/rsa.svg")).unwrap();
    assert!(!rsa.contains("chance"));

    let out = layerscope(&["report", "--config", &config]);
    assert!(out.status.success());
    let md = String::from_utf8(out.stdout).unwrap();
    assert!(md.contains("| desk | synthetic | probe |"));
    assert_eq!(md, fs::read_to_string(out_dir.join("report.md")).unwrap());
}

#[test]
fn staged_commands_write_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path());
    for cmd in ["pool", "sample", "triplets"] {
        let out = layerscope(&[cmd, "--config", &config, "--layers", "0-1"]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out_dir = tmp.path().join("out");
    assert!(out_dir.join("cache/desk/phone_L1.segt").is_file());
    assert!(!out_dir.join("cache/desk/phone_L2.segt").exists());
    let sample = fs::read_to_string(out_dir.join("desk/phone_sample.jsonl")).unwrap();
    let parsed = layerscope::sampling::SampleSet::from_jsonl(&sample).unwrap();
    assert!(!parsed.rows.is_empty());
    let triplets = fs::read_to_string(out_dir.join("desk/triplets.jsonl")).unwrap();
    let parsed = layerscope::sampling::TripletSet::from_jsonl(&triplets).unwrap();
    assert!(!parsed.triplets.is_empty());
}

#[test]
fn csv_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path());
    let mut csvs = Vec::new();
    for threads in ["1", "4", "16"] {
        let out_dir = tmp.path().join(format!("out{threads}"));
        let out = layerscope(&["--threads", threads, "run", "--config", &config, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success());
        csvs.push(fs::read(out_dir.join("results.csv")).unwrap());
    }
    assert!(csvs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path());
    let out_dir = tmp.path().join("o");
    let out = layerscope(&[
        "run", "--config", &config, "--analysis", "probe,abx", "--layers", "2", "--seed", "99",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("desk,synthetic,probe,phone,2,"));
    let resolved = fs::read_to_string(out_dir.join("config.resolved.json")).unwrap();
    assert!(resolved.contains("\"seed\": 99"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.json");
    let out = layerscope(&["run", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "config");

    let config = synth(tmp.path());
    let out = layerscope(&["run", "--config", &config, "--layers", "5-3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = layerscope(&["run", "--config", &config, "--analysis", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path());
    let emb = tmp.path().join("spk2_u1_L1.emb");
    let bytes = fs::read(&emb).unwrap();
    fs::write(&emb, &bytes[..bytes.len() - 4]).unwrap();
    let out = layerscope(&["run", "--config", &config]);
    assert_eq!(out.status.code(), Some(3));
    let errors = fs::read_to_string(tmp.path().join("out/errors.json")).unwrap();
    let errors: serde_json::Value = serde_json::from_str(&errors).unwrap();
    assert_eq!(errors[0]["kind"], "data");
    assert!(errors[0]["message"].as_str().unwrap().contains("spk2_u1"));
}

#[test]
fn numerical_errors_exit_4_and_strict_stops() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path());
    // identical reference vectors: every reference distance is zero
    let path = tmp.path().join("reference.emb");
    let m = read_frame_matrix(&path).unwrap();
    let rows = vec![vec![1.0; m.dim()]; m.num_frames()];
    write_frame_matrix(&FrameMatrix::from_rows(0, &rows).unwrap(), &path).unwrap();

    let out = layerscope(&["run", "--config", &config]);
    assert_eq!(out.status.code(), Some(4));
    let csv = fs::read_to_string(tmp.path().join("out/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 3, "other analyses still reported");

    let strict_out = tmp.path().join("strict");
    let out = layerscope(&["run", "--config", &config, "--strict", "--out", strict_out.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"]["kind"], "numerical");
    assert!(!strict_out.join("results.csv").exists());
}
