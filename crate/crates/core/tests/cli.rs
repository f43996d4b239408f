use std::path::Path;
use std::process::{Command, Output};

use airdrop_forensics::pipeline::Report;
use airdrop_forensics::synth::{Archetype, ScenarioSpec};

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airdrop-forensics")).args(args).current_dir(cwd).output().unwrap()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&o.stderr)))
}

#[test]
fn synth_then_run_all_reports_fourteen_clusters() {
    let tmp = tempfile::tempdir().unwrap();
    let counts = [200, 120, 80, 45, 30, 20, 15, 10, 8, 5, 4, 25, 12, 6];
    let spec = ScenarioSpec::with_population(14, Archetype::ALL.iter().copied().zip(counts));
    std::fs::write(tmp.path().join("spec.json"), serde_json::to_string(&spec).unwrap()).unwrap();
    let o = bin(&["synth", "--seed", "14", "--spec", "spec.json", "--out", "corpus"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = bin(&["run-all", "--config", "corpus/run.toml", "--format", "dot"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(tmp.path().join("corpus/out/report/report.json")).unwrap();
    let report: Report = serde_json::from_str(&text).unwrap();
    assert_eq!(report.clusters.k, 14);
    assert_eq!(report.clusters.members, counts.iter().sum::<usize>());
    let md = std::fs::read_to_string(tmp.path().join("corpus/out/report/report.md")).unwrap();
    assert!(md.contains("K = 14"));
    assert!(tmp.path().join("corpus/out/graph/token.dot").is_file());
}

#[test]
fn detect_before_graph_exits_one_with_json() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(bin(&["synth", "--members", "200", "--instances", "1", "--out", "c"], tmp.path()).status.success());
    assert!(bin(&["ingest", "--config", "c/run.toml"], tmp.path()).status.success());
    let o = bin(&["detect", "--config", "c/run.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "MissingArtifact");
    assert_eq!(e["stage"], "graph");
}

#[test]
fn bad_config_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("run.toml"), "out_dir = 3\n").unwrap();
    let o = bin(&["ingest", "--config", "run.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "ConfigInvalid");
    let o = bin(&["graph"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let o = bin(&["no-such-command"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn rerunning_a_stage_rewrites_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(bin(&["synth", "--members", "300", "--instances", "2", "--out", "c"], tmp.path()).status.success());
    assert!(bin(&["ingest", "--config", "c/run.toml"], tmp.path()).status.success());
    assert!(bin(&["graph", "--config", "c/run.toml", "--slice-interval", "14"], tmp.path()).status.success());
    let first = std::fs::read(tmp.path().join("c/out/graph/metric_series.json")).unwrap();
    assert!(bin(&["graph", "--config", "c/run.toml", "--slice-interval", "14"], tmp.path()).status.success());
    assert_eq!(first, std::fs::read(tmp.path().join("c/out/graph/metric_series.json")).unwrap());
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("c/out/graph/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["slice_interval_days"], 14);
}
