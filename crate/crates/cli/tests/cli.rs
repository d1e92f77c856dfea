use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[dataset]
preset = "hub-twin"
train_per_class = 40
test_per_class = 20

[learner.vanilla]
[learner.replay]
buffer_fraction = 0.1

[experiment]
seeds = [0]
random_repeats = 5
"#;

fn curforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curforge"))
        .current_dir(dir)
        .env_remove("CURFORGE_WORKERS")
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_flag_prints_usage_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = curforge(dir.path(), &["rank", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn rank_scores_all_120_curricula() {
    let dir = tempfile::tempdir().unwrap();
    let o = curforge(dir.path(), &["rank", "--out", "o"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let entries: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(entries.len(), 120);
    assert!(dir.path().join("o/ranking.json").exists());
}

#[test]
fn analyze_rejects_empty_records() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let o = curforge(dir.path(), &["analyze", "--records", "empty.jsonl", "--out", "o"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("empty input"), "{}", stderr(&o));
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[learner.vanilla]\nlr = -1.0\n").unwrap();
    let o = curforge(dir.path(), &["--config", "c.toml", "run"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn full_pipeline_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("c.toml"), SMALL).unwrap();
    let step = |args: &[&str]| {
        let mut full = vec!["--config", "c.toml", "--out", "o"];
        full.extend_from_slice(args);
        let o = curforge(p, &full);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        o
    };
    step(&["gen"]);
    assert!(p.join("o/features.csv").exists() && p.join("o/features.json").exists());
    step(&["prototypes"]);
    let d: serde_json::Value = serde_json::from_slice(&fs::read(p.join("o/distance.json")).unwrap()).unwrap();
    assert_eq!(d["n"], 5);
    step(&["run", "--workers", "2"]);
    let records = fs::read_to_string(p.join("o/records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 240);
    step(&["run", "--resume"]);
    assert_eq!(fs::read_to_string(p.join("o/records.jsonl")).unwrap(), records);
    step(&["analyze"]);
    step(&["analyze", "--verify"]);
    let o = step(&["report"]);
    let listed = String::from_utf8(o.stdout).unwrap();
    assert_eq!(listed.lines().count(), 8);
    assert!(p.join("o/csv/recall_at_k.csv").exists());

    // a tampered report no longer verifies
    let report = fs::read_to_string(p.join("o/report.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&report).unwrap();
    v["body"]["n_records"] = 7.into();
    fs::write(p.join("o/report.json"), v.to_string()).unwrap();
    let o = curforge(p, &["--config", "c.toml", "--out", "o", "analyze", "--verify"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn workers_env_var_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_curforge"))
        .current_dir(dir.path())
        .env("CURFORGE_WORKERS", "0")
        .args(["--config", "c.toml", "run"])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("workers must be positive"));

    let o = Command::new(env!("CARGO_BIN_EXE_curforge"))
        .current_dir(dir.path())
        .env("CURFORGE_WORKERS", "3")
        .args(["--config", "c.toml", "--out", "o", "run"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}
