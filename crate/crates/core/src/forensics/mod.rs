//! Peer-to-peer component census and the aggregation / hunter-clique detectors.

mod cliques;
mod components;
mod detect;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphs::{CommunityGraph, NodeClass};
use crate::ingest::{ClaimRecord, EventStore};
use crate::types::{Address, Timestamp, TokenAmount};

pub use cliques::{detect_blatant, maximal_cliques, undirected_adjacency};
pub use components::{component_graph, p2p_components, write_component_census_csv, ComponentProfile};
pub use detect::{detect_cautious, detect_chain, detect_sponsorship, detect_sunflower};

#[derive(Debug, Error, PartialEq)]
pub enum ForensicsError {
    #[error("external data has no transaction before the airdrop at {airdrop_ts}")]
    MissingExternalWindow { airdrop_ts: Timestamp },
    #[error("export: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PatternKind {
    Chain,
    Sunflower,
    SunflowerRelay,
    StagingAggregation,
    SponsorshipClique,
    CautiousClique,
    BlatantClique,
}

impl PatternKind {
    pub const ALL: [PatternKind; 7] = [
        PatternKind::Chain,
        PatternKind::Sunflower,
        PatternKind::SunflowerRelay,
        PatternKind::StagingAggregation,
        PatternKind::SponsorshipClique,
        PatternKind::CautiousClique,
        PatternKind::BlatantClique,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PatternKind::Chain => "Chain",
            PatternKind::Sunflower => "Sunflower",
            PatternKind::SunflowerRelay => "SunflowerRelay",
            PatternKind::StagingAggregation => "StagingAggregation",
            PatternKind::SponsorshipClique => "SponsorshipClique",
            PatternKind::CautiousClique => "CautiousClique",
            PatternKind::BlatantClique => "BlatantClique",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberRole {
    Source,
    Relay,
    Sink,
    Sponsor,
    Member,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternMember {
    pub address: Address,
    pub role: MemberRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternFinding {
    pub component_id: usize,
    pub pattern: PatternKind,
    pub members: Vec<PatternMember>,
    pub evidence: Vec<String>,
    pub aggregate_value: TokenAmount,
}

impl PatternFinding {
    pub fn addresses(&self) -> BTreeSet<Address> {
        self.members.iter().map(|m| m.address).collect()
    }

    pub fn with_role(&self, role: MemberRole) -> impl Iterator<Item = &Address> {
        self.members.iter().filter(move |m| m.role == role).map(|m| &m.address)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    /// Minimum path length in edges.
    pub min_len: usize,
    pub max_in: usize,
    /// Allowed relative drop between consecutive edge weights.
    pub accumulation_slack: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { min_len: 3, max_in: 2, accumulation_slack: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SunflowerConfig {
    pub min_spokes: usize,
    pub forward_frac: f64,
}

impl Default for SunflowerConfig {
    fn default() -> Self {
        SunflowerConfig { min_spokes: 5, forward_frac: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SponsorshipConfig {
    pub min_beneficiaries: usize,
    pub min_sponsors: usize,
}

impl Default for SponsorshipConfig {
    fn default() -> Self {
        SponsorshipConfig { min_beneficiaries: 5, min_sponsors: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CautiousConfig {
    pub min_size: usize,
    /// Findings need external density strictly below this.
    pub max_density: f64,
}

impl Default for CautiousConfig {
    fn default() -> Self {
        CautiousConfig { min_size: 6, max_density: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlatantConfig {
    pub min: usize,
    pub max: usize,
}

impl Default for BlatantConfig {
    fn default() -> Self {
        BlatantConfig { min: 3, max: 5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub chain: ChainConfig,
    pub sunflower: SunflowerConfig,
    pub sponsorship: SponsorshipConfig,
    pub cautious: CautiousConfig,
    pub blatant: BlatantConfig,
}

/// Read-only inputs shared by all detectors.
pub struct DetectContext<'a> {
    pub token: &'a CommunityGraph,
    pub external: &'a CommunityGraph,
    pub claims: &'a BTreeMap<Address, ClaimRecord>,
    /// Dictionary contracts plus contracts seen only in internal transactions.
    pub contracts: BTreeSet<Address>,
    /// Addresses with at least one token transfer to or from a contract.
    pub contract_touching: BTreeSet<Address>,
    /// Claimant -> non-claimant, non-contract senders of external
    /// transactions to it before the airdrop.
    pub pre_airdrop_funders: BTreeMap<Address, BTreeSet<Address>>,
    pub airdrop_ts: Timestamp,
}

impl<'a> DetectContext<'a> {
    pub fn new(
        token: &'a CommunityGraph,
        external: &'a CommunityGraph,
        claims: &'a BTreeMap<Address, ClaimRecord>,
        contracts: BTreeSet<Address>,
        airdrop_ts: Timestamp,
    ) -> Self {
        let is_contract = |a: &Address| contracts.contains(a) || token.class_of(a) == Some(NodeClass::Contract);
        let mut contract_touching = BTreeSet::new();
        for (from, to) in token.edges.keys() {
            if is_contract(to) {
                contract_touching.insert(*from);
            }
            if is_contract(from) {
                contract_touching.insert(*to);
            }
        }
        let mut pre_airdrop_funders: BTreeMap<Address, BTreeSet<Address>> = BTreeMap::new();
        for ((from, to), e) in &external.edges {
            if e.first_ts < airdrop_ts
                && claims.contains_key(to)
                && !claims.contains_key(from)
                && !is_contract(from)
                && external.class_of(from) != Some(NodeClass::Contract)
            {
                pre_airdrop_funders.entry(*to).or_default().insert(*from);
            }
        }
        DetectContext { token, external, claims, contracts, contract_touching, pre_airdrop_funders, airdrop_ts }
    }

    pub fn from_store(store: &'a EventStore, token: &'a CommunityGraph, external: &'a CommunityGraph) -> Self {
        let mut contracts: BTreeSet<Address> = store.contracts.keys().copied().collect();
        contracts.extend(store.undocumented_contracts());
        Self::new(token, external, &store.claims, contracts, store.airdrop_timestamp())
    }

    pub fn is_contract(&self, a: &Address) -> bool {
        self.contracts.contains(a)
            || self.token.class_of(a) == Some(NodeClass::Contract)
            || self.external.class_of(a) == Some(NodeClass::Contract)
    }

    pub fn is_claimant(&self, a: &Address) -> bool {
        self.claims.contains_key(a)
    }

    /// True when some external transaction predates the airdrop.
    pub fn external_covers_pre_airdrop(&self) -> bool {
        self.external.earliest_timestamp().is_some_and(|t| t < self.airdrop_ts)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub components: usize,
    pub findings: Vec<PatternFinding>,
    /// Non-fatal notes: skipped detectors and weak signals.
    pub notes: Vec<String>,
}

impl DetectionReport {
    pub fn count(&self, kind: PatternKind) -> usize {
        self.findings.iter().filter(|f| f.pattern == kind).count()
    }
}

/// Run every detector over every component, then the external clique search.
pub fn run_detectors(
    ctx: &DetectContext<'_>,
    components: &[ComponentProfile],
    cfg: &DetectorConfig,
) -> DetectionReport {
    let sponsorship_ok = ctx.external_covers_pre_airdrop();
    let mut notes = Vec::new();
    if !sponsorship_ok {
        let e = ForensicsError::MissingExternalWindow { airdrop_ts: ctx.airdrop_ts };
        log::warn!("sponsorship detector skipped: {e}");
        notes.push(format!("sponsorship detector skipped: {e}"));
    }
    let per_component: Vec<(Vec<PatternFinding>, Vec<String>)> = components
        .par_iter()
        .map(|c| {
            let mut found = Vec::new();
            let mut notes = Vec::new();
            found.extend(detect_chain(c, &cfg.chain));
            found.extend(detect_sunflower(c, ctx, &cfg.sunflower));
            if sponsorship_ok {
                match detect_sponsorship(c, ctx, &cfg.sponsorship) {
                    Ok((f, note)) => {
                        found.extend(f);
                        notes.extend(note);
                    }
                    Err(e) => notes.push(e.to_string()),
                }
            }
            found.extend(detect_cautious(c, ctx, &cfg.cautious));
            (found, notes)
        })
        .collect();
    let mut findings = Vec::new();
    for (f, n) in per_component {
        findings.extend(f);
        notes.extend(n);
    }
    findings.extend(detect_blatant(ctx, components, &cfg.blatant));
    findings.sort_by(|a, b| (a.component_id, a.pattern).cmp(&(b.component_id, b.pattern)));
    DetectionReport { components: components.len(), findings, notes }
}

/// Re-run the rule that produced `finding` on its component and check that it
/// yields the same finding.
pub fn revalidate(
    finding: &PatternFinding,
    ctx: &DetectContext<'_>,
    components: &[ComponentProfile],
    cfg: &DetectorConfig,
) -> bool {
    let Some(c) = components.iter().find(|c| c.id == finding.component_id) else {
        return false;
    };
    let again = match finding.pattern {
        PatternKind::Chain => detect_chain(c, &cfg.chain),
        PatternKind::Sunflower | PatternKind::SunflowerRelay | PatternKind::StagingAggregation => {
            detect_sunflower(c, ctx, &cfg.sunflower)
        }
        PatternKind::SponsorshipClique => detect_sponsorship(c, ctx, &cfg.sponsorship).ok().and_then(|r| r.0),
        PatternKind::CautiousClique => detect_cautious(c, ctx, &cfg.cautious),
        PatternKind::BlatantClique => {
            return detect_blatant(ctx, components, &cfg.blatant).contains(finding);
        }
    };
    again.as_ref() == Some(finding)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingPowerEntry {
    pub component_id: usize,
    pub pattern: PatternKind,
    pub sink: Address,
    /// The sink's own claim plus everything it received inside the component.
    pub controlled: TokenAmount,
    pub mean_member_claim: TokenAmount,
    pub ratio: f64,
}

/// Tokens gathered by each finding's sink against the mean claim of the
/// pattern's initial members.
pub fn voting_power_report(
    findings: &[PatternFinding],
    claims: &BTreeMap<Address, ClaimRecord>,
    components: &[ComponentProfile],
) -> Vec<VotingPowerEntry> {
    let by_id: BTreeMap<usize, &ComponentProfile> = components.iter().map(|c| (c.id, c)).collect();
    let mut out = Vec::new();
    for f in findings {
        let Some(comp) = by_id.get(&f.component_id) else { continue };
        let inflow = |a: &Address| -> TokenAmount {
            comp.edges.iter().filter(|(_, to, _)| to == a).map(|(_, _, e)| e.total_value).sum()
        };
        let mut candidates: Vec<Address> = f.with_role(MemberRole::Sink).copied().collect();
        if candidates.is_empty() {
            candidates = f.with_role(MemberRole::Sponsor).copied().collect();
        }
        let sink = candidates
            .into_iter()
            .max_by_key(|a| (inflow(a), std::cmp::Reverse(*a)))
            .or_else(|| f.members.first().map(|m| m.address));
        let Some(sink) = sink else { continue };
        let own = claims.get(&sink).map(|c| c.amount).unwrap_or_default();
        let controlled = own + inflow(&sink);
        let member_claims: Vec<u128> =
            f.members.iter().filter_map(|m| claims.get(&m.address)).map(|c| c.amount.0).collect();
        if member_claims.is_empty() {
            continue;
        }
        let mean = member_claims.iter().sum::<u128>() / member_claims.len() as u128;
        let ratio = if mean == 0 { 0.0 } else { controlled.0 as f64 / mean as f64 };
        out.push(VotingPowerEntry {
            component_id: f.component_id,
            pattern: f.pattern,
            sink,
            controlled,
            mean_member_claim: TokenAmount(mean),
            ratio,
        });
    }
    out
}

/// One JSON object per line.
pub fn write_findings_jsonl<W: Write>(findings: &[PatternFinding], mut out: W) -> Result<(), ForensicsError> {
    for f in findings {
        let line = serde_json::to_string(f).map_err(|e| ForensicsError::Io(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| ForensicsError::Io(e.to_string()))?;
    }
    Ok(())
}

pub fn read_findings_jsonl(text: &str) -> Result<Vec<PatternFinding>, ForensicsError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| ForensicsError::Io(e.to_string())))
        .collect()
}
