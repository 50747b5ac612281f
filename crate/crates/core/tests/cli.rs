use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_cachenet"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap()
}

const SINGLE: &str = r#"{
    "network": { "kind": "line", "length": 1, "capacity": 1 },
    "contents": 1,
    "analyze": { "hits": 0.5, "roundtrip": true }
}"#;

#[test]
fn analyze_maps_half_hit_to_ln2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), SINGLE, &["analyze"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = summary(dir.path());
    assert!(s["roundtrip_error"].as_f64().unwrap() <= 1e-10);
    let csv = fs::read_to_string(dir.path().join("out/analysis.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let timer: f64 = row[header.iter().position(|&c| c == "timer").unwrap()]
        .parse()
        .unwrap();
    assert!((timer - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn json_outputs_carry_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        SINGLE,
        &["analyze", "--format", "json", "--seed", "7"],
    );
    assert!(out.status.success());
    let doc: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/analysis.json")).unwrap())
            .unwrap();
    assert_eq!(doc["seed"], 7);
    assert_eq!(doc["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(summary(dir.path())["config_hash"], doc["config_hash"]);
    assert!(doc["rows"].as_array().is_some_and(|r| r.len() == 1));
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(dir.path(), "{ not json", &["solve"]).status.code(),
        Some(2)
    );
    let unknown = r#"{ "network": { "kind": "line", "length": 1, "capacity": 1 }, "bogus": 1 }"#;
    assert_eq!(run(dir.path(), unknown, &["solve"]).status.code(), Some(2));
    let infeasible = r#"{ "network": { "kind": "line", "length": 2, "capacity": 1 }, "contents": 1, "analyze": { "hits": 0.7 } }"#;
    assert_eq!(
        run(dir.path(), infeasible, &["analyze"]).status.code(),
        Some(2)
    );
}

#[test]
fn unknown_figure_exits_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_cachenet"))
        .args(["reproduce", "fig99"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn primal_dual_non_convergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "network": { "kind": "binary-tree", "depth": 2, "capacity": 1 },
        "contents": 5,
        "primal_dual": { "max_iter": 1, "recover": false }
    }"#;
    assert_eq!(
        run(dir.path(), cfg, &["primal-dual"]).status.code(),
        Some(3)
    );
}

const COMPARE: &str = r#"{
    "network": { "kind": "line", "length": 2, "capacity": 2 },
    "contents": 10,
    "baselines": ["lru"],
    "simulation": { "requests": 20000, "replications": 1 }
}"#;

#[test]
fn compare_is_deterministic_with_one_row_per_baseline() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = run(d.path(), COMPARE, &["compare", "--seed", "3"]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let read =
        |d: &tempfile::TempDir| fs::read_to_string(d.path().join("out/compare.csv")).unwrap();
    let text = read(&a);
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 2);
    assert!(text.lines().nth(2).unwrap().starts_with("lru"));
    assert_eq!(text, read(&b));
}
