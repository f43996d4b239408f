//! Staged batch pipeline. Every stage reads earlier stages' artifacts from the
//! output directory and writes its own subdirectory, so any stage can be
//! re-run alone and every intermediate can be diffed.
//!
//! ```text
//! out/ingest/       canonical inputs + ingest_report.json
//! out/graph/        token_/external_ nodes+edges CSV, metric_series.json, summary.json
//! out/cluster/      features.csv, assignment.csv, clusters.csv, silhouette.json, dendrogram.json, roles.json
//! out/detect/       components.csv, findings.jsonl, detection.json, voting_power.json, components/
//! out/eligibility/  verdicts.csv, summary.json
//! out/stats/        behavior.json, attrition.json, contracts.json, tier_composition.json, distributions.json
//! out/report/       report.json, report.md
//! ```

mod config;
mod report;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{
    map_roles, select_k, silhouette_curve_json, write_assignment_csv, write_cluster_table_csv, ClusterAssignment,
    ClusterError,
};
use crate::eligibility::{run_campaign, write_verdicts_csv, EligibilityError, EligibilityHistory};
use crate::flows::{build_all_flows, extract_features, write_feature_matrix_csv, FlowError, FlowIssue};
use crate::forensics::{
    component_graph, p2p_components, run_detectors, voting_power_report, write_component_census_csv,
    write_findings_jsonl, DetectContext, ForensicsError, PatternKind,
};
use crate::graphs::{
    build_external_graph, build_token_graph, metric_series, read_graph_csv, weekly_slices, write_dot, write_graph_csv,
    write_graphml, GraphError, MetricPoint,
};
use crate::ingest::{ingest, EventStore, IngestError, CLAIMS_FILE, CONTRACTS_FILE, EXTERNAL_FILE, TOKEN_FILE};
use crate::stats::{
    attrition, behavior_table, holding_timelines, period_quantity_distributions, tier_composition, top_contracts,
};
use crate::synth::{ScenarioSpec, SynthError};
use crate::types::{Address, Timestamp};

pub use config::{EligibilityConfig, GraphConfig, InputConfig, RunConfig, StatsConfig, TimePoint, WindowConfig};
pub use report::{assemble_report, Report};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("missing artifact {} (run the {stage} stage first)", path.display())]
    MissingArtifact { stage: String, path: PathBuf },
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Internal(String),
}

impl PipelineError {
    /// 1 for problems with inputs or configuration, 2 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Internal(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::ConfigInvalid(_) => "ConfigInvalid",
            PipelineError::MissingArtifact { .. } => "MissingArtifact",
            PipelineError::Validation(_) => "ValidationFailed",
            PipelineError::Internal(_) => "Internal",
        }
    }

    /// Machine-readable form printed on standard error by the CLI.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let PipelineError::MissingArtifact { stage, path } = self {
            v["stage"] = stage.clone().into();
            v["path"] = path.display().to_string().into();
        }
        v
    }
}

fn internal(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Internal(e.to_string())
}

impl From<IngestError> for PipelineError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Write(_) => internal(e),
            _ => PipelineError::Validation(e.to_string()),
        }
    }
}

impl From<GraphError> for PipelineError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Io(_) => internal(e),
            _ => PipelineError::Validation(e.to_string()),
        }
    }
}

impl From<ClusterError> for PipelineError {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::Io(_) => internal(e),
            _ => PipelineError::Validation(e.to_string()),
        }
    }
}

impl From<FlowError> for PipelineError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::Io(_) => internal(e),
            _ => PipelineError::Validation(e.to_string()),
        }
    }
}

impl From<ForensicsError> for PipelineError {
    fn from(e: ForensicsError) -> Self {
        match e {
            ForensicsError::Io(_) => internal(e),
            _ => PipelineError::Validation(e.to_string()),
        }
    }
}

impl From<EligibilityError> for PipelineError {
    fn from(e: EligibilityError) -> Self {
        match e {
            EligibilityError::Io(_) => internal(e),
            _ => PipelineError::Validation(e.to_string()),
        }
    }
}

impl From<SynthError> for PipelineError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InfeasibleSpec(_) => PipelineError::Validation(e.to_string()),
            _ => internal(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Graph,
    Cluster,
    Detect,
    Eligibility,
    Stats,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Ingest, Stage::Graph, Stage::Cluster, Stage::Detect, Stage::Eligibility, Stage::Stats, Stage::Report];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Graph => "graph",
            Stage::Cluster => "cluster",
            Stage::Detect => "detect",
            Stage::Eligibility => "eligibility",
            Stage::Stats => "stats",
            Stage::Report => "report",
        }
    }
}

/// Extra export format on top of the CSV/JSON stage artifacts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
    Graphml,
    Dot,
}

pub const INGEST_REPORT: &str = "ingest_report.json";
pub const METRIC_SERIES: &str = "metric_series.json";
pub const GRAPH_SUMMARY: &str = "summary.json";
pub const FEATURES: &str = "features.csv";
pub const FLOW_ISSUES: &str = "flow_issues.json";
pub const ASSIGNMENT: &str = "assignment.csv";
pub const CLUSTER_TABLE: &str = "clusters.csv";
pub const SILHOUETTE: &str = "silhouette.json";
pub const DENDROGRAM: &str = "dendrogram.json";
pub const ROLES: &str = "roles.json";
pub const COMPONENTS: &str = "components.csv";
pub const FINDINGS: &str = "findings.jsonl";
pub const DETECTION: &str = "detection.json";
pub const VOTING_POWER: &str = "voting_power.json";
pub const VERDICTS: &str = "verdicts.csv";
pub const ELIGIBILITY_SUMMARY: &str = "summary.json";
pub const BEHAVIOR: &str = "behavior.json";
pub const ATTRITION: &str = "attrition.json";
pub const CONTRACTS: &str = "contracts.json";
pub const TIER_COMPOSITION: &str = "tier_composition.json";
pub const DISTRIBUTIONS: &str = "distributions.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";
pub const RUN_CONFIG: &str = "run.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub token_nodes: usize,
    pub token_edges: usize,
    pub external_nodes: usize,
    pub external_edges: usize,
    pub token_nodes_by_class: BTreeMap<String, usize>,
    pub slice_interval_days: u32,
    /// Metrics of the last cumulative slice.
    pub last_slice: Option<MetricPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummaryFile {
    pub k: usize,
    pub members: usize,
    pub role_shares: BTreeMap<String, crate::clustering::Share>,
    pub unmapped: Vec<usize>,
    pub tied_k: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolesFile {
    pub summary: ClusterSummaryFile,
    pub clusters: Vec<crate::clustering::ClusterSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub components: usize,
    pub findings: usize,
    pub by_pattern: BTreeMap<PatternKind, usize>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IssueRow {
    subject: Address,
    #[serde(flatten)]
    issue: FlowIssue,
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(internal)?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(internal)
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| internal(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    File::create(path).map(BufWriter::new).map_err(|e| internal(format!("{}: {e}", path.display())))
}

/// Reads `address,cluster[,role]` rows written by the cluster stage.
pub fn read_assignment_csv(path: &Path) -> Result<ClusterAssignment, PipelineError> {
    let bad = |e: String| PipelineError::Validation(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut labels = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let a: Address = rec.get(0).unwrap_or_default().parse().map_err(|e| bad(format!("{e}")))?;
        let l: usize = rec.get(1).unwrap_or_default().parse().map_err(|e| bad(format!("{e}")))?;
        labels.insert(a, l);
    }
    let k = labels.values().max().map(|m| m + 1).unwrap_or(0);
    Ok(ClusterAssignment { labels, k, silhouette_by_k: BTreeMap::new(), tied_k: Vec::new() })
}

pub struct Pipeline {
    pub config: RunConfig,
    pub format: OutputFormat,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Pipeline { config, format: OutputFormat::Csv })
    }

    pub fn with_format(mut self, format: OutputFormat) -> Self {
        self.format = format;
        self
    }

    pub fn out(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn dir(&self, stage: Stage) -> PathBuf {
        self.config.out_dir.join(stage.name())
    }

    fn fresh_dir(&self, stage: Stage) -> Result<PathBuf, PipelineError> {
        let d = self.dir(stage);
        fs::create_dir_all(&d).map_err(|e| internal(format!("{}: {e}", d.display())))?;
        Ok(d)
    }

    fn require(&self, stage: Stage, file: &str) -> Result<PathBuf, PipelineError> {
        let p = self.dir(stage).join(file);
        if p.is_file() {
            Ok(p)
        } else {
            Err(PipelineError::MissingArtifact { stage: stage.name().into(), path: p })
        }
    }

    pub fn load_store(&self) -> Result<EventStore, PipelineError> {
        for f in [TOKEN_FILE, EXTERNAL_FILE, CONTRACTS_FILE, CLAIMS_FILE] {
            self.require(Stage::Ingest, f)?;
        }
        Ok(EventStore::load_canonical(&self.dir(Stage::Ingest), &self.config.ingest_config()?)?)
    }

    pub fn run_stage(&self, stage: Stage) -> Result<(), PipelineError> {
        log::info!("stage {}", stage.name());
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Graph => self.graph(),
            Stage::Cluster => self.cluster(),
            Stage::Detect => self.detect(),
            Stage::Eligibility => self.eligibility(),
            Stage::Stats => self.stats(),
            Stage::Report => self.report(),
        }
    }

    pub fn run_all(&self) -> Result<(), PipelineError> {
        Stage::ALL.iter().try_for_each(|s| self.run_stage(*s))
    }

    pub fn ingest(&self) -> Result<(), PipelineError> {
        self.config.check_inputs()?;
        let (store, report) = ingest(&self.config.input_paths(), &self.config.ingest_config()?)?;
        if report.malformed_rows > 0 {
            log::warn!("{} malformed rows reported in {}", report.malformed_rows, INGEST_REPORT);
        }
        let dir = self.fresh_dir(Stage::Ingest)?;
        store.write_canonical(&dir)?;
        write_json(&dir.join(INGEST_REPORT), &report)
    }

    pub fn graph(&self) -> Result<(), PipelineError> {
        let store = self.load_store()?;
        let dir = self.fresh_dir(Stage::Graph)?;
        let token = build_token_graph(&store);
        let external = build_external_graph(&store);
        write_graph_csv(&token, &dir, "token")?;
        write_graph_csv(&external, &dir, "external")?;
        let w = self.config.study_window()?;
        let interval = self.config.graph.slice_interval_days;
        let slices = weekly_slices(&store, w.start, w.end, interval)?;
        let series = metric_series(&slices, self.config.graph.assortativity);
        write_json(&dir.join(METRIC_SERIES), &series)?;
        let mut by_class = BTreeMap::new();
        for c in token.nodes.values() {
            *by_class.entry(c.as_str().to_string()).or_insert(0) += 1;
        }
        let summary = GraphSummary {
            token_nodes: token.node_count(),
            token_edges: token.edge_count(),
            external_nodes: external.node_count(),
            external_edges: external.edge_count(),
            token_nodes_by_class: by_class,
            slice_interval_days: interval,
            last_slice: series.points.last().cloned(),
        };
        write_json(&dir.join(GRAPH_SUMMARY), &summary)?;
        let decimals = self.config.token_decimals;
        match self.format {
            OutputFormat::Graphml => {
                write_graphml(&token, decimals, create(&dir.join("token.graphml"))?)?;
                write_graphml(&external, self.config.native_decimals, create(&dir.join("external.graphml"))?)?;
            }
            OutputFormat::Dot => {
                write_dot(&token, decimals, create(&dir.join("token.dot"))?)?;
                write_dot(&external, self.config.native_decimals, create(&dir.join("external.dot"))?)?;
            }
            _ => {}
        }
        Ok(())
    }

    pub fn cluster(&self) -> Result<(), PipelineError> {
        let store = self.load_store()?;
        let dir = self.fresh_dir(Stage::Cluster)?;
        let members: Vec<Address> = store.claims.keys().copied().collect();
        let flows = build_all_flows(&store, &members, self.config.classify);
        let issues: Vec<IssueRow> = flows
            .iter()
            .flat_map(|(a, f)| f.issues.iter().map(|i| IssueRow { subject: *a, issue: i.clone() }))
            .collect();
        write_json(&dir.join(FLOW_ISSUES), &issues)?;
        let weights = self.config.cluster.weights;
        let features: BTreeMap<Address, _> =
            flows.iter().map(|(a, f)| (*a, extract_features(&f.flow, weights))).collect();
        let rows: Vec<_> = features.iter().map(|(a, f)| (*a, *f)).collect();
        write_feature_matrix_csv(&rows, create(&dir.join(FEATURES))?)?;
        let ordered: Vec<_> = features.values().cloned().collect();
        let (assignment, dendrogram) = select_k(&members, &ordered, &self.config.cluster)?;
        let roles = map_roles(&assignment, &features);
        write_assignment_csv(&assignment, &roles, create(&dir.join(ASSIGNMENT))?)?;
        write_cluster_table_csv(&roles, create(&dir.join(CLUSTER_TABLE))?)?;
        write_json(&dir.join(SILHOUETTE), &silhouette_curve_json(&assignment))?;
        write_json(&dir.join(DENDROGRAM), &dendrogram.to_nested_json())?;
        let summary = ClusterSummaryFile {
            k: assignment.k,
            members: members.len(),
            role_shares: roles.role_shares().into_iter().map(|(r, s)| (r.as_str().to_string(), s)).collect(),
            unmapped: roles.unmapped.clone(),
            tied_k: assignment.tied_k.clone(),
        };
        write_json(&dir.join(ROLES), &RolesFile { summary, clusters: roles.clusters })
    }

    pub fn detect(&self) -> Result<(), PipelineError> {
        let graph_dir = self.dir(Stage::Graph);
        for f in ["token_nodes.csv", "token_edges.csv", "external_nodes.csv", "external_edges.csv"] {
            self.require(Stage::Graph, f)?;
        }
        let store = self.load_store()?;
        let token = read_graph_csv(&graph_dir, "token")?;
        let external = read_graph_csv(&graph_dir, "external")?;
        let dir = self.fresh_dir(Stage::Detect)?;
        let ctx = DetectContext::from_store(&store, &token, &external);
        let comps = p2p_components(&token, &ctx.contracts);
        let report = run_detectors(&ctx, &comps, &self.config.detectors);
        write_component_census_csv(&comps, self.config.token_decimals, create(&dir.join(COMPONENTS))?)?;
        write_findings_jsonl(&report.findings, create(&dir.join(FINDINGS))?)?;
        let summary = DetectionSummary {
            components: report.components,
            findings: report.findings.len(),
            by_pattern: PatternKind::ALL.iter().map(|k| (*k, report.count(*k))).collect(),
            notes: report.notes.clone(),
        };
        write_json(&dir.join(DETECTION), &summary)?;
        write_json(&dir.join(VOTING_POWER), &voting_power_report(&report.findings, &store.claims, &comps))?;
        let flagged: std::collections::BTreeSet<usize> = report.findings.iter().map(|f| f.component_id).collect();
        let cdir = dir.join("components");
        fs::create_dir_all(&cdir).map_err(internal)?;
        for c in comps.iter().filter(|c| flagged.contains(&c.id)) {
            let g = component_graph(c);
            let name = format!("component_{}", c.id);
            write_dot(&g, self.config.token_decimals, create(&cdir.join(format!("{name}.dot")))?)?;
            if self.format == OutputFormat::Graphml {
                write_graphml(&g, self.config.token_decimals, create(&cdir.join(format!("{name}.graphml")))?)?;
            }
        }
        Ok(())
    }

    pub fn eligibility(&self) -> Result<(), PipelineError> {
        let store = self.load_store()?;
        let dir = self.fresh_dir(Stage::Eligibility)?;
        let start = self.config.eligibility.history_start.as_ref().map(|t| t.resolve(false)).transpose()?;
        let history = EligibilityHistory::from_store(&store, start);
        let snapshot: Timestamp = self.config.snapshot()?;
        let result = run_campaign(&history.interacting(), &history, &self.config.eligibility.rules, snapshot)?;
        write_verdicts_csv(&result.verdicts, create(&dir.join(VERDICTS))?)?;
        write_json(&dir.join(ELIGIBILITY_SUMMARY), &result.summary)
    }

    pub fn stats(&self) -> Result<(), PipelineError> {
        let assignment = read_assignment_csv(&self.require(Stage::Cluster, ASSIGNMENT)?)?;
        let store = self.load_store()?;
        let dir = self.fresh_dir(Stage::Stats)?;
        let members: Vec<Address> = store.claims.keys().copied().collect();
        let flows: BTreeMap<_, _> =
            build_all_flows(&store, &members, self.config.classify).into_iter().map(|(a, f)| (a, f.flow)).collect();
        let cutoff = self.config.cutoff()?;
        write_json(&dir.join(BEHAVIOR), &behavior_table(&flows, &store.claims))?;
        write_json(&dir.join(ATTRITION), &attrition(&flows, &store.claims, cutoff))?;
        write_json(&dir.join(CONTRACTS), &top_contracts(&store, self.config.stats.top_contracts))?;
        write_json(&dir.join(TIER_COMPOSITION), &tier_composition(&assignment, &store.claims))?;
        let timelines = holding_timelines(&flows, cutoff);
        let dists = period_quantity_distributions(&timelines, self.config.token_decimals, self.config.stats.bandwidth);
        write_json(&dir.join(DISTRIBUTIONS), &dists)
    }

    pub fn report(&self) -> Result<(), PipelineError> {
        let report = assemble_report(self)?;
        let dir = self.fresh_dir(Stage::Report)?;
        write_json(&dir.join(REPORT_JSON), &report)?;
        let mut out = create(&dir.join(REPORT_MD))?;
        out.write_all(report.to_markdown().as_bytes()).and_then(|_| out.flush()).map_err(internal)
    }
}

/// Generates a scenario into `dir` together with a `run.toml` that points the
/// pipeline at it (outputs under `dir/out`).
pub fn synth_to_dir(spec: &ScenarioSpec, dir: &Path) -> Result<RunConfig, PipelineError> {
    let out = crate::synth::generate(spec)?;
    fs::create_dir_all(dir).map_err(internal)?;
    out.write_to_dir(dir)?;
    let paths = EventStore::canonical_paths(Path::new(""));
    let mut cfg = RunConfig::new(InputConfig {
        token_transfers: paths.token_transfers,
        external_txs: paths.external_txs,
        internal_txs: paths.internal_txs,
        contracts: paths.contracts,
        claims: paths.claims,
        balances: paths.balances,
    });
    cfg.window = WindowConfig { start: TimePoint::Unix(spec.window.start), end: TimePoint::Unix(spec.window.end) };
    cfg.token_decimals = spec.token_decimals;
    cfg.eligibility.snapshot = Some(TimePoint::Unix(out.truth.eligibility_snapshot));
    let text = cfg.to_toml()?;
    fs::write(dir.join(RUN_CONFIG), text).map_err(internal)?;
    cfg.rebase(dir);
    Ok(cfg)
}

#[cfg(test)]
mod tests;
