use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::*;
use crate::synth::{NoiseSpec, PatternSpec, PlantKind};

fn small_spec(seed: u64) -> ScenarioSpec {
    let mut spec = ScenarioSpec::reference_mix(seed, 300);
    spec.patterns = vec![
        PatternSpec::new(PlantKind::Chain, 2),
        PatternSpec::new(PlantKind::Sunflower, 2),
        PatternSpec::new(PlantKind::Blatant, 1),
    ];
    spec.noise = NoiseSpec { traders: 60, edge_rate: 0.2, decoys: 6, external_edges: 50 };
    spec
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn config_round_trips_through_toml() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_to_dir(&small_spec(1), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join(RUN_CONFIG)).unwrap();
    let parsed = RunConfig::from_toml(&text).unwrap();
    assert_eq!(RunConfig::from_toml(&parsed.to_toml().unwrap()).unwrap(), parsed);
    assert_eq!(RunConfig::load(&dir.path().join(RUN_CONFIG)).unwrap(), cfg);
}

#[test]
fn dates_resolve_to_day_bounds() {
    let d = TimePoint::Date("2021-11-15".into());
    assert_eq!(d.resolve(false).unwrap(), 1_636_934_400);
    assert_eq!(d.resolve(true).unwrap(), 1_636_934_400 + 86_399);
    assert!(matches!(TimePoint::Date("15/11/2021".into()).resolve(false), Err(PipelineError::ConfigInvalid(_))));
}

#[test]
fn unknown_keys_and_bad_ranges_are_config_errors() {
    let base = "[inputs]\ntoken_transfers='a'\nexternal_txs='b'\ncontracts='c'\nclaims='d'\n";
    let e = RunConfig::from_toml(&format!("{base}bogus = 1\n")).unwrap_err();
    assert_eq!(e.exit_code(), 1);
    let mut cfg = RunConfig::from_toml(base).unwrap();
    cfg.cluster.k_min = 1;
    assert!(matches!(Pipeline::new(cfg.clone()), Err(PipelineError::ConfigInvalid(_))));
    cfg.cluster.k_min = 2;
    cfg.window.end = TimePoint::Date("2021-01-01".into());
    assert!(matches!(Pipeline::new(cfg), Err(PipelineError::ConfigInvalid(_))));
}

#[test]
fn missing_inputs_fail_validation() {
    let base = "[inputs]\ntoken_transfers='nope.csv'\nexternal_txs='b'\ncontracts='c'\nclaims='d'\n";
    let p = Pipeline::new(RunConfig::from_toml(base).unwrap()).unwrap();
    let e = p.ingest().unwrap_err();
    assert_eq!(e.kind(), "ConfigInvalid");
    assert_eq!(e.exit_code(), 1);
}

#[test]
fn detect_without_graph_reports_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_to_dir(&small_spec(2), dir.path()).unwrap();
    let p = Pipeline::new(cfg).unwrap();
    p.ingest().unwrap();
    let e = p.detect().unwrap_err();
    assert!(matches!(&e, PipelineError::MissingArtifact { stage, .. } if stage == "graph"));
    assert_eq!(e.exit_code(), 1);
    assert_eq!(e.to_json()["error"], "MissingArtifact");
    let e = p.stats().unwrap_err();
    assert!(matches!(&e, PipelineError::MissingArtifact { stage, .. } if stage == "cluster"));
}

#[test]
fn run_all_is_byte_identical_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synth_to_dir(&small_spec(3), dir.path()).unwrap();
    let first = dir.path().join("run1");
    cfg.out_dir = first.clone();
    Pipeline::new(cfg.clone()).unwrap().with_format(OutputFormat::Dot).run_all().unwrap();
    let second = dir.path().join("run2");
    cfg.out_dir = second.clone();
    Pipeline::new(cfg).unwrap().with_format(OutputFormat::Dot).run_all().unwrap();
    let (a, b) = (tree(&first), tree(&second));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(v == &b[k], "{k} differs");
    }
    for f in [
        "ingest/ingest_report.json",
        "graph/token_edges.csv",
        "graph/metric_series.json",
        "graph/token.dot",
        "cluster/assignment.csv",
        "cluster/dendrogram.json",
        "detect/findings.jsonl",
        "eligibility/verdicts.csv",
        "stats/distributions.json",
        "report/report.md",
    ] {
        assert!(a.contains_key(f), "missing {f}");
    }
    let report: Report = serde_json::from_slice(&a["report/report.json"]).unwrap();
    assert_eq!(report.ingest.claimed_addresses as usize, report.clusters.members);
    assert!(report.detection.by_pattern[&crate::forensics::PatternKind::BlatantClique] >= 1);
}
