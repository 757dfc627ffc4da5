use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "benchmark": {
    "train_frames": 30,
    "test_frames": 10,
    "query_sequences": 2,
    "sequence_len": 4,
    "world": { "render_dims": [202, 154] }
  },
  "gcn": { "epochs": 3, "hidden": 16 },
  "ablation": { "descriptors": ["one_hot_189", "semantic_only_7"], "merging": [true] },
  "planner": { "episodes": 4, "eval_seeds": 1, "eval_episodes": 2 }
}"#;

fn semgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semgraph"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = semgraph(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn version_lists_schema_versions() {
    let v = ok(&["--version"]);
    for format in ["params", "qstore", "manifest", "report"] {
        assert!(v.contains(&format!("{format} schema 1")), "{v}");
    }
}

#[test]
fn missing_subcommand_and_bad_config_fail() {
    assert!(!semgraph(&[]).status.success());
    let dir = tempfile::tempdir().unwrap();
    let bad = config(
        dir.path(),
        r#"{ "datasets": { "train": "/does/not/exist", "query": [] } }"#,
    );
    let out = semgraph(&["--config", &bad, "localize"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
}

#[test]
fn ablate_is_byte_identical_and_report_matches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&[
            "--config",
            &cfg,
            "--seed",
            "5",
            "--out",
            out.to_str().unwrap(),
            "ablate",
        ]);
    }
    let csv = fs::read(a.join("ablation.csv")).unwrap();
    assert_eq!(csv, fs::read(b.join("ablation.csv")).unwrap());
    let text = String::from_utf8(csv).unwrap();
    // header + 2 graph kinds x 2 descriptors
    assert_eq!(text.lines().count(), 5);
    assert!(text
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(2) == Some("5")));

    let summary = fs::read_to_string(a.join("summary.csv")).unwrap();
    let printed = ok(&["--out", a.to_str().unwrap(), "report"]);
    assert_eq!(printed, summary);

    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("ablate.run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 5);
    assert!(text.contains(run["config_hash"].as_str().unwrap()));
}

#[test]
fn generated_sequences_feed_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    ok(&["--config", &cfg, "--out", out_s, "generate"]);
    let datasets = fs::read_to_string(out.join("data/datasets.json")).unwrap();
    assert!(out.join("data/query_001/manifest.json").is_file());

    let with_data = SMALL.replacen('{', &format!("{{ \"datasets\": {datasets},"), 1);
    let cfg = config(dir.path(), &with_data);
    let graphs = ok(&[
        "--config",
        &cfg,
        "--out",
        out_s,
        "graphs",
        "--input",
        out.join("data/test").to_str().unwrap(),
    ]);
    assert!(graphs.starts_with("10 graphs"), "{graphs}");

    ok(&["--config", &cfg, "--out", out_s, "train"]);
    assert!(out.join("model.bin").is_file() && out.join("model.bin.json").is_file());

    ok(&["--config", &cfg, "--out", out_s, "localize"]);
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let top1 = metrics["report"]["pf_top1_all"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&top1));
    let trace = fs::read_to_string(out.join("traces/query_000.csv")).unwrap();
    assert_eq!(trace.lines().count(), 5);
}

#[test]
fn plan_writes_store_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("plan");
    ok(&["--config", &cfg, "--out", out.to_str().unwrap(), "plan"]);
    let curve = fs::read_to_string(out.join("curve.csv")).unwrap();
    assert_eq!(
        curve.lines().next(),
        Some("episode,reward,epsilon,store_size")
    );
    assert_eq!(curve.lines().count(), 5);
    assert_eq!(&fs::read(out.join("qstore.bin")).unwrap()[..4], b"SGQS");
    let plan = fs::read_to_string(out.join("plan.csv")).unwrap();
    // header + learned + 10 fixed steps, one eval seed each
    assert_eq!(plan.lines().count(), 12);
}
