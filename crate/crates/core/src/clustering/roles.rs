use std::collections::BTreeMap;
use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use super::ClusterAssignment;
use crate::flows::{FeatureVector, OperationKind};
use crate::types::Address;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RoleLabel {
    Speculator,
    DiamondHolderRiskAverse,
    DiamondHolderRiskSeeking,
    AirdropHunterSuspect,
    DiversifiedMember,
    Buyer,
}

impl RoleLabel {
    pub const ALL: [RoleLabel; 6] = [
        RoleLabel::Speculator,
        RoleLabel::DiamondHolderRiskAverse,
        RoleLabel::DiamondHolderRiskSeeking,
        RoleLabel::AirdropHunterSuspect,
        RoleLabel::DiversifiedMember,
        RoleLabel::Buyer,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RoleLabel::Speculator => "Speculator",
            RoleLabel::DiamondHolderRiskAverse => "DiamondHolderRiskAverse",
            RoleLabel::DiamondHolderRiskSeeking => "DiamondHolderRiskSeeking",
            RoleLabel::AirdropHunterSuspect => "AirdropHunterSuspect",
            RoleLabel::DiversifiedMember => "DiversifiedMember",
            RoleLabel::Buyer => "Buyer",
        }
    }
}

impl fmt::Display for RoleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Operations that take part in role rules. Receive, Unstake and LpRemove
/// are reactions to other operations and are ignored.
const ROLE_OPS: [OperationKind; 5] =
    [OperationKind::Buy, OperationKind::Sell, OperationKind::LpAdd, OperationKind::Stake, OperationKind::Send];

fn mask(kinds: &[OperationKind]) -> u8 {
    kinds.iter().fold(0, |b, k| b | k.bit())
}

/// Role for a characteristic operation set, if one of the rules matches.
pub fn role_for_ops(bits: u8) -> Option<RoleLabel> {
    use OperationKind::*;
    let bits = bits & mask(&ROLE_OPS);
    if bits & Buy.bit() != 0 {
        return Some(RoleLabel::Buyer);
    }
    let rules: [(&[OperationKind], RoleLabel); 11] = [
        (&[Sell], RoleLabel::Speculator),
        (&[Sell, Send], RoleLabel::Speculator),
        (&[], RoleLabel::DiamondHolderRiskAverse),
        (&[Stake], RoleLabel::DiamondHolderRiskSeeking),
        (&[LpAdd, Stake], RoleLabel::DiamondHolderRiskSeeking),
        (&[LpAdd], RoleLabel::DiamondHolderRiskSeeking),
        (&[Send], RoleLabel::AirdropHunterSuspect),
        (&[Stake, Sell], RoleLabel::DiversifiedMember),
        (&[Stake, Send], RoleLabel::DiversifiedMember),
        (&[LpAdd, Sell], RoleLabel::DiversifiedMember),
        (&[LpAdd, Send], RoleLabel::DiversifiedMember),
    ];
    rules.iter().find(|(k, _)| mask(k) == bits).map(|(_, r)| *r)
}

/// Exact fraction of a population, kept as counts so sums stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Share {
    pub count: u64,
    pub total: u64,
}

impl Share {
    pub fn new(count: u64, total: u64) -> Self {
        Share { count, total }
    }

    pub fn pct(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count as f64 * 100.0 / self.total as f64
        }
    }

    /// Sum of shares over one population; `None` if the totals differ.
    pub fn sum<'a>(shares: impl IntoIterator<Item = &'a Share>, total: u64) -> Option<Share> {
        shares.into_iter().try_fold(Share::new(0, total), |acc, s| acc.checked_add(*s))
    }

    pub fn checked_add(self, rhs: Share) -> Option<Share> {
        (self.total == rhs.total).then_some(Share::new(self.count + rhs.count, self.total))
    }
}

impl Add for Share {
    type Output = Share;
    fn add(self, rhs: Share) -> Share {
        self.checked_add(rhs).expect("shares of different populations")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    pub share: Share,
    /// Operations present in more than half of the members.
    pub operations: Vec<OperationKind>,
    pub role: Option<RoleLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleMapping {
    pub clusters: Vec<ClusterSummary>,
    pub roles: BTreeMap<Address, RoleLabel>,
    /// Clusters whose operation set matches no rule; left for manual triage.
    pub unmapped: Vec<usize>,
}

impl RoleMapping {
    pub fn cluster(&self, id: usize) -> Option<&ClusterSummary> {
        self.clusters.iter().find(|c| c.cluster == id)
    }

    /// Combined share of the given clusters.
    pub fn aggregate(&self, ids: &[usize]) -> Share {
        let total = self.clusters.iter().map(|c| c.size as u64).sum();
        Share::sum(ids.iter().filter_map(|id| self.cluster(*id)).map(|c| &c.share), total).expect("one population")
    }

    pub fn role_shares(&self) -> BTreeMap<RoleLabel, Share> {
        let total = self.clusters.iter().map(|c| c.size as u64).sum();
        let mut out = BTreeMap::new();
        for c in &self.clusters {
            if let Some(r) = c.role {
                let e = out.entry(r).or_insert(Share::new(0, total));
                *e = *e + c.share;
            }
        }
        out
    }
}

/// Derive each cluster's characteristic operation set and its role.
pub fn map_roles(assignment: &ClusterAssignment, features: &BTreeMap<Address, FeatureVector>) -> RoleMapping {
    let mut members: BTreeMap<usize, Vec<&FeatureVector>> = BTreeMap::new();
    for (a, l) in &assignment.labels {
        if let Some(f) = features.get(a) {
            members.entry(*l).or_default().push(f);
        }
    }
    let total: u64 = members.values().map(|v| v.len() as u64).sum();
    let mut clusters = Vec::new();
    let mut unmapped = Vec::new();
    let mut role_of_cluster = BTreeMap::new();
    for (id, fs) in &members {
        let bits = OperationKind::ALL
            .iter()
            .filter(|k| 2 * fs.iter().filter(|f| f.has(**k)).count() > fs.len())
            .fold(0u8, |b, k| b | k.bit());
        let role = role_for_ops(bits);
        match role {
            Some(r) => {
                role_of_cluster.insert(*id, r);
            }
            None => {
                log::warn!("cluster {id} has no role rule for {:#010b}", bits);
                unmapped.push(*id);
            }
        }
        clusters.push(ClusterSummary {
            cluster: *id,
            size: fs.len(),
            share: Share::new(fs.len() as u64, total),
            operations: OperationKind::ALL.into_iter().filter(|k| bits & k.bit() != 0).collect(),
            role,
        });
    }
    let roles = assignment.labels.iter().filter_map(|(a, l)| role_of_cluster.get(l).map(|r| (*a, *r))).collect();
    RoleMapping { clusters, roles, unmapped }
}
