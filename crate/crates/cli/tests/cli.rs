use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ticc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ticc"))
        .args(args)
        .output()
        .expect("spawn ticc")
}

fn ok(args: &[&str]) {
    let out = ticc(args);
    assert!(
        out.status.success(),
        "ticc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Run a command expected to fail and return the parsed stderr JSON.
fn fails(args: &[&str]) -> Value {
    let out = ticc(args);
    assert!(!out.status.success(), "ticc {args:?} unexpectedly succeeded");
    let err: Value = serde_json::from_slice(&out.stderr)
        .unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {}", String::from_utf8_lossy(&out.stderr)));
    assert!(err["error"]["message"].is_string());
    err
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate_small(dir: &Path, seed: &str) {
    ok(&[
        "generate",
        "--preset",
        "1,2,1",
        "-n",
        "3",
        "-w",
        "2",
        "--per-segment",
        "120",
        "--seed",
        seed,
        "--output-dir",
        s(dir),
    ]);
}

#[test]
fn generate_writes_expected_files() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["generate", "--preset", "1,2,1", "--output-dir", s(tmp.path())]);
    let series = fs::read_to_string(tmp.path().join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 600);
    assert_eq!(series.lines().next().unwrap().split(',').count(), 5);
    let thetas = read_json(&tmp.path().join("truth_thetas.json"));
    assert_eq!(thetas.as_array().unwrap().len(), 2);
    let labels = read_json(&tmp.path().join("truth_labels.json"));
    assert_eq!(labels.as_array().unwrap().len(), 600);
    let manifest = read_json(&tmp.path().join("manifest.json"));
    assert_eq!(manifest["command"], "generate");
    assert!(manifest["prng"].as_str().unwrap().contains("ChaCha8"));
    assert!(manifest["version"].is_string());
}

#[test]
fn generate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_small(a.path(), "11");
    generate_small(b.path(), "11");
    for f in ["series.csv", "truth_labels.json", "truth_thetas.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let c = tempfile::tempdir().unwrap();
    generate_small(c.path(), "12");
    assert_ne!(
        fs::read(a.path().join("series.csv")).unwrap(),
        fs::read(c.path().join("series.csv")).unwrap()
    );
}

#[test]
fn unknown_preset_lists_valid_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let err = fails(&["generate", "--preset", "9,9", "--output-dir", s(tmp.path())]);
    assert!(err["error"]["message"].as_str().unwrap().contains("1,2,3,2,1"));
}

#[test]
fn explicit_segments() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "generate",
        "--segments",
        "1:50,2:30",
        "-n",
        "2",
        "-w",
        "2",
        "--output-dir",
        s(tmp.path()),
    ]);
    let labels: Vec<usize> = serde_json::from_value(read_json(&tmp.path().join("truth_labels.json"))).unwrap();
    assert_eq!(labels.len(), 80);
    assert_eq!(labels[49], 0);
    assert_eq!(labels[50], 1);
}

#[test]
fn single_cluster_fit_labels_everything_zero() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    generate_small(data.path(), "3");
    ok(&[
        "fit",
        "--input",
        s(&data.path().join("series.csv")),
        "-K",
        "1",
        "-w",
        "2",
        "--output-dir",
        s(out.path()),
    ]);
    let csv = fs::read_to_string(out.path().join("assignment.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,label"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 360);
    assert!(rows.iter().enumerate().all(|(t, r)| *r == format!("{t},0")));
}

#[test]
fn fit_then_evaluate() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let scores_dir = tempfile::tempdir().unwrap();
    generate_small(data.path(), "5");
    ok(&[
        "--threads",
        "2",
        "fit",
        "--input",
        s(&data.path().join("series.csv")),
        "-K",
        "2",
        "-w",
        "2",
        "--seed",
        "1",
        "--debug-trace",
        "--output-dir",
        s(out.path()),
    ]);
    let manifest = read_json(&out.path().join("manifest.json"));
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config"]["clusters"], 2);
    let t = &manifest["timings"];
    for key in ["load_secs", "cost_build_secs", "dp_secs", "fit_secs", "write_secs"] {
        assert!(t[key].as_f64().unwrap() > 0.0, "{key} = {}", t[key]);
    }
    let per_cluster = t["admm_secs_per_cluster"].as_array().unwrap();
    assert_eq!(per_cluster.len(), 2);
    assert!(per_cluster.iter().all(|v| v.as_f64().unwrap() > 0.0));
    let trace = fs::read_to_string(out.path().join("admm_trace.csv")).unwrap();
    assert!(trace.lines().count() > 1);

    ok(&[
        "evaluate",
        "--model",
        s(&out.path().join("model.json")),
        "--truth",
        s(data.path()),
        "--output-dir",
        s(scores_dir.path()),
    ]);
    let scores = read_json(&scores_dir.path().join("scores.json"));
    for key in ["macro_f1", "micro_f1", "per_cluster_f1", "network_f1", "matching"] {
        assert!(!scores[key].is_null(), "missing {key}");
    }
    let f1 = scores["macro_f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));
    let parsed: ticc_core::Scores = serde_json::from_value(scores).unwrap();
    assert_eq!(parsed.per_cluster_f1.len(), 2);
}

/// A model whose assignment and precisions are the ground truth itself.
fn write_truth_model(data: &Path, model_dir: &Path) {
    let labels: Vec<usize> = serde_json::from_value(read_json(&data.join("truth_labels.json"))).unwrap();
    let thetas: Vec<ticc_core::BlockToeplitzMatrix> =
        serde_json::from_value(read_json(&data.join("truth_thetas.json"))).unwrap();
    let k = thetas.len();
    let w = thetas[0].w();
    let counts = ticc_core::AssignmentPath::new(labels.clone()).counts(k);
    let model = ticc_core::TiccModel {
        config: ticc_core::TiccConfig::new(k, w, 1.0, 0.0),
        clusters: thetas
            .into_iter()
            .zip(counts)
            .map(|(t, c)| ticc_core::ClusterModel::new(t, vec![0.0; 3 * w], c))
            .collect(),
        assignment: ticc_core::AssignmentPath::new(labels),
        em_iters_run: 0,
        warm_up_iters_run: 0,
        converged: true,
        objective_trace: Vec::new(),
        admm_nonconverged: 0,
        empty_repairs: 0,
        degenerate_input: false,
    };
    fs::write(model_dir.join("model.json"), model.to_json().unwrap()).unwrap();
}

#[test]
fn perfect_model_scores_one() {
    let data = tempfile::tempdir().unwrap();
    let model_dir = tempfile::tempdir().unwrap();
    generate_small(data.path(), "8");
    write_truth_model(data.path(), model_dir.path());
    ok(&[
        "evaluate",
        "--model",
        s(&model_dir.path().join("model.json")),
        "--truth",
        s(data.path()),
        "--output-dir",
        s(model_dir.path()),
    ]);
    let scores = read_json(&model_dir.path().join("scores.json"));
    assert_eq!(scores["macro_f1"], 1.0);
    assert_eq!(scores["micro_f1"], 1.0);
    assert_eq!(scores["network_f1"], 1.0);
}

#[test]
fn evaluate_rejects_mismatched_truth() {
    let small = tempfile::tempdir().unwrap();
    let other = tempfile::tempdir().unwrap();
    let model_dir = tempfile::tempdir().unwrap();
    generate_small(small.path(), "8");
    write_truth_model(small.path(), model_dir.path());
    let model = model_dir.path().join("model.json");

    // Three clusters in the truth, two in the model.
    ok(&[
        "generate",
        "--preset",
        "1,2,3,2,1",
        "-n",
        "3",
        "-w",
        "2",
        "--per-segment",
        "72",
        "--output-dir",
        s(other.path()),
    ]);
    let err = fails(&[
        "evaluate",
        "--model",
        s(&model),
        "--truth",
        s(other.path()),
        "--output-dir",
        s(model_dir.path()),
    ]);
    assert_eq!(err["error"]["kind"], "cluster_count_mismatch");

    // Same K but a different window in the precisions.
    ok(&[
        "generate",
        "--preset",
        "1,2,1",
        "-n",
        "3",
        "-w",
        "3",
        "--per-segment",
        "120",
        "--output-dir",
        s(other.path()),
    ]);
    let err = fails(&[
        "evaluate",
        "--model",
        s(&model),
        "--truth",
        s(other.path()),
        "--output-dir",
        s(model_dir.path()),
    ]);
    assert_eq!(err["error"]["kind"], "dimension");
}

#[test]
fn sweep_writes_one_row_per_value() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    generate_small(data.path(), "4");
    ok(&[
        "sweep",
        "--input",
        s(&data.path().join("series.csv")),
        "--truth",
        s(data.path()),
        "--over",
        "k",
        "--values",
        "1..3",
        "-w",
        "2",
        "--output-dir",
        s(out.path()),
    ]);
    let csv = fs::read_to_string(out.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    for col in ["bic", "macro_f1", "switches", "runtime_secs"] {
        assert!(header.contains(&col), "{col}");
    }
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let idx = |c: &str| header.iter().position(|h| *h == c).unwrap();
    for (row, k) in rows.iter().zip(1..) {
        assert_eq!(row[idx("param")], "k");
        assert_eq!(row[idx("clusters")], k.to_string());
        assert!(row[idx("bic")].parse::<f64>().unwrap().is_finite());
        assert!(row[idx("runtime_secs")].parse::<f64>().unwrap() > 0.0);
    }
    assert_eq!(rows[0][idx("switches")], "0");
}

#[test]
fn sweep_rejects_empty_range() {
    let data = tempfile::tempdir().unwrap();
    generate_small(data.path(), "4");
    let series = data.path().join("series.csv");
    for values in ["6..2", "", " , "] {
        let err = fails(&[
            "sweep",
            "--input",
            s(&series),
            "--over",
            "k",
            "--values",
            values,
            "--output-dir",
            s(data.path()),
        ]);
        assert_eq!(err["error"]["kind"], "invalid_range", "{values:?}");
    }
}

#[test]
fn failures_report_json() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.csv");
    let err = fails(&["fit", "--input", s(&missing), "--output-dir", s(tmp.path())]);
    assert_eq!(err["error"]["kind"], "io");
    let err = fails(&["fit", "--output-dir", s(tmp.path())]);
    assert_eq!(err["error"]["kind"], "usage");
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "1,2\n3\n").unwrap();
    let err = fails(&["fit", "--input", s(&bad), "--output-dir", s(tmp.path())]);
    assert_eq!(err["error"]["kind"], "ragged_row");
}
