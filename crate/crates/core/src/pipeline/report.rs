use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    read_json, ClusterSummaryFile, DetectionSummary, GraphSummary, Pipeline, PipelineError, RolesFile, Stage,
    ATTRITION, BEHAVIOR, CONTRACTS, DETECTION, ELIGIBILITY_SUMMARY, GRAPH_SUMMARY, INGEST_REPORT, METRIC_SERIES, ROLES,
    SILHOUETTE, TIER_COMPOSITION,
};
use crate::clustering::ClusterSummary;
use crate::eligibility::CampaignSummary;
use crate::graphs::MetricSeries;
use crate::ingest::IngestReport;
use crate::stats::{Action, AttritionReport, ContractRank, TierBehavior, TierComposition};
use crate::types::timestamp_to_date;

/// Everything the report shows, copied from stage artifacts without
/// further computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub ingest: IngestReport,
    pub graph: GraphSummary,
    pub metric_series: MetricSeries,
    pub clusters: ClusterSummaryFile,
    pub cluster_table: Vec<ClusterSummary>,
    pub silhouette: serde_json::Value,
    pub detection: DetectionSummary,
    pub eligibility: CampaignSummary,
    pub behavior: Vec<TierBehavior>,
    pub attrition: AttritionReport,
    pub contracts: Vec<ContractRank>,
    pub tier_composition: Vec<TierComposition>,
}

pub fn assemble_report(p: &Pipeline) -> Result<Report, PipelineError> {
    let load = |stage: Stage, file: &str| p.require(stage, file);
    let roles: RolesFile = read_json(&load(Stage::Cluster, ROLES)?)?;
    Ok(Report {
        ingest: read_json(&load(Stage::Ingest, INGEST_REPORT)?)?,
        graph: read_json(&load(Stage::Graph, GRAPH_SUMMARY)?)?,
        metric_series: read_json(&load(Stage::Graph, METRIC_SERIES)?)?,
        clusters: roles.summary,
        cluster_table: roles.clusters,
        silhouette: read_json(&load(Stage::Cluster, SILHOUETTE)?)?,
        detection: read_json(&load(Stage::Detect, DETECTION)?)?,
        eligibility: read_json(&load(Stage::Eligibility, ELIGIBILITY_SUMMARY)?)?,
        behavior: read_json(&load(Stage::Stats, BEHAVIOR)?)?,
        attrition: read_json(&load(Stage::Stats, ATTRITION)?)?,
        contracts: read_json(&load(Stage::Stats, CONTRACTS)?)?,
        tier_composition: read_json(&load(Stage::Stats, TIER_COMPOSITION)?)?,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

impl Report {
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let i = &self.ingest;
        let _ = writeln!(s, "# Airdrop community report\n");
        let _ = writeln!(s, "## Corpus\n");
        let _ = writeln!(s, "| records | count |\n|---|---:|");
        let _ = writeln!(s, "| token transfers | {} |", i.token_records);
        let _ = writeln!(s, "| external transactions | {} |", i.external_records);
        let _ = writeln!(s, "| internal transactions | {} |", i.internal_records);
        let _ = writeln!(s, "| contracts | {} |", i.contracts);
        let _ = writeln!(s, "| claimants | {} |", i.claimed_addresses);
        let _ = writeln!(s, "| malformed rows | {} |", i.malformed_rows);
        let _ = writeln!(s, "| duplicates removed | {} |\n", i.duplicates_removed);

        let _ = writeln!(s, "## Behavior per tier\n");
        let mut head = String::from("| tier | claimed |");
        let mut rule = String::from("|---|---:|");
        for a in Action::ALL {
            let _ = write!(head, " {} % |", a.as_str());
            rule.push_str("---:|");
        }
        let _ = writeln!(s, "{head} left % |\n{rule}---:|");
        for b in &self.behavior {
            let _ = write!(s, "| {} | {} |", b.tier, b.claimed);
            for a in Action::ALL {
                let _ = write!(s, " {} |", b.actions.get(&a).map(|x| format!("{:.2}", x.pct())).unwrap_or_default());
            }
            let left = self.attrition.per_tier.get(&b.tier).map(|x| format!("{:.2}", x.pct())).unwrap_or_default();
            let _ = writeln!(s, " {left} |");
        }
        let a = &self.attrition;
        let _ = writeln!(
            s,
            "\nAt {} {:.2}% of claimants hold nothing; {:.2}% of the claimed tokens left the community.\n",
            timestamp_to_date(a.cutoff),
            a.left.pct(),
            a.outflow_pct
        );

        let _ = writeln!(s, "## Clusters\n");
        let _ = writeln!(
            s,
            "K = {} over {} claimants (silhouette {}).\n",
            self.clusters.k,
            self.clusters.members,
            opt(self
                .silhouette
                .get("curve")
                .and_then(|c| { c.as_array()?.iter().find(|p| p["k"] == self.clusters.k)?["silhouette"].as_f64() }))
        );
        let _ = writeln!(s, "| cluster | size | share % | operations | role |\n|---:|---:|---:|---|---|");
        for c in &self.cluster_table {
            let ops: Vec<&str> = c.operations.iter().map(|o| o.name()).collect();
            let _ = writeln!(
                s,
                "| {} | {} | {:.2} | {} | {} |",
                c.cluster,
                c.size,
                c.share.pct(),
                if ops.is_empty() { "holding".to_string() } else { ops.join(", ") },
                c.role.map(|r| r.as_str()).unwrap_or("unmapped")
            );
        }
        let _ = writeln!(s, "\n| role | share % |\n|---|---:|");
        for (r, sh) in &self.clusters.role_shares {
            let _ = writeln!(s, "| {r} | {:.2} |", sh.pct());
        }
        let _ = writeln!(s, "\n| cluster | 5200 % | 7800 % | 10400 % |\n|---:|---:|---:|---:|");
        for t in &self.tier_composition {
            let f = t.fractions;
            let _ = writeln!(s, "| {} | {:.2} | {:.2} | {:.2} |", t.cluster, 100.0 * f[0], 100.0 * f[1], 100.0 * f[2]);
        }

        let _ = writeln!(s, "\n## Contracts used by claimants\n");
        let _ = writeln!(s, "| contract | category | members |\n|---|---|---:|");
        for c in &self.contracts {
            let _ = writeln!(s, "| {} | {} | {} |", c.name, c.category, c.members);
        }

        let g = &self.graph;
        let _ = writeln!(s, "\n## Network\n");
        let _ = writeln!(
            s,
            "Token graph: {} nodes, {} edges. External graph: {} nodes, {} edges.\n",
            g.token_nodes, g.token_edges, g.external_nodes, g.external_edges
        );
        let _ = writeln!(
            s,
            "| cutoff | nodes | edges | reciprocity | assortativity | attracting components |\n|---|---:|---:|---:|---:|---:|"
        );
        for p in &self.metric_series.points {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} |",
                timestamp_to_date(p.cutoff),
                p.nodes,
                p.edges,
                opt(p.reciprocity),
                opt(p.assortativity),
                p.attracting_components
            );
        }

        let d = &self.detection;
        let _ = writeln!(s, "\n## Suspicious patterns\n");
        let _ = writeln!(s, "{} peer-to-peer components, {} findings.\n", d.components, d.findings);
        let _ = writeln!(s, "| pattern | findings |\n|---|---:|");
        for (k, n) in &d.by_pattern {
            let _ = writeln!(s, "| {} | {} |", k.as_str(), n);
        }
        for n in &d.notes {
            let _ = writeln!(s, "\n> {n}");
        }

        let e = &self.eligibility;
        let _ = writeln!(s, "\n## Eligibility\n");
        let _ = writeln!(s, "{} of {} addresses eligible.\n", e.eligible, e.population);
        let _ = writeln!(s, "| tier | addresses |\n|---|---:|");
        for (t, n) in &e.tier_counts {
            let _ = writeln!(s, "| {t} | {n} |");
        }
        let _ = writeln!(s, "\n| excluded by | addresses |\n|---|---:|");
        for (r, n) in &e.exclusions {
            let _ = writeln!(s, "| {r} | {n} |");
        }
        s
    }
}
