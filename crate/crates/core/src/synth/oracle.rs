use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::GroundTruth;
use crate::clustering::{ClusterAssignment, RoleLabel, RoleMapping};
use crate::forensics::{PatternFinding, PatternKind};
use crate::types::Address;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindScore {
    pub findings: usize,
    pub true_findings: usize,
    pub instances: usize,
    pub recovered: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleScore {
    pub predicted: usize,
    pub actual: usize,
    pub correct: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub patterns: BTreeMap<PatternKind, KindScore>,
    /// Share of archetype members whose cluster's majority archetype is their own.
    pub purity: Option<f64>,
    pub roles: BTreeMap<RoleLabel, RoleScore>,
}

fn ratio(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

/// A finding is true when more than half of its members belong to one
/// planted instance whose implied kinds include the finding's kind.
fn matches(f: &PatternFinding, members: &BTreeSet<Address>) -> bool {
    let hit = f.members.iter().filter(|m| members.contains(&m.address)).count();
    2 * hit > f.members.len()
}

pub fn oracle_compare(
    truth: &GroundTruth,
    findings: &[PatternFinding],
    clusters: Option<(&ClusterAssignment, &RoleMapping)>,
) -> OracleReport {
    let mut patterns = BTreeMap::new();
    for kind in PatternKind::ALL {
        let planted: Vec<BTreeSet<Address>> = truth.instances_of(kind).map(|i| i.addresses()).collect();
        let found: Vec<&PatternFinding> = findings.iter().filter(|f| f.pattern == kind).collect();
        let true_findings = found.iter().filter(|f| planted.iter().any(|p| matches(f, p))).count();
        let recovered = planted.iter().filter(|p| found.iter().any(|f| matches(f, p))).count();
        patterns.insert(
            kind,
            KindScore {
                findings: found.len(),
                true_findings,
                instances: planted.len(),
                recovered,
                precision: ratio(true_findings, found.len(), 1.0),
                recall: ratio(recovered, planted.len(), 1.0),
            },
        );
    }

    let mut purity = None;
    let mut roles = BTreeMap::new();
    if let Some((assignment, mapping)) = clusters {
        let mut per: BTreeMap<usize, BTreeMap<_, usize>> = BTreeMap::new();
        let mut n = 0;
        for (a, arch) in &truth.archetype_of {
            if let Some(l) = assignment.labels.get(a) {
                *per.entry(*l).or_default().entry(*arch).or_default() += 1;
                n += 1;
            }
        }
        let majority: usize = per.values().map(|m| m.values().max().copied().unwrap_or(0)).sum();
        purity = (n > 0).then(|| majority as f64 / n as f64);

        for role in RoleLabel::ALL {
            let predicted: BTreeSet<&Address> = mapping
                .roles
                .iter()
                .filter(|(a, r)| **r == role && truth.archetype_of.contains_key(a))
                .map(|(a, _)| a)
                .collect();
            let actual: BTreeSet<&Address> =
                truth.role_of.iter().filter(|(_, r)| **r == role).map(|(a, _)| a).collect();
            let correct = predicted.intersection(&actual).count();
            if predicted.is_empty() && actual.is_empty() {
                continue;
            }
            roles.insert(
                role,
                RoleScore {
                    predicted: predicted.len(),
                    actual: actual.len(),
                    correct,
                    precision: ratio(correct, predicted.len(), 1.0),
                    recall: ratio(correct, actual.len(), 1.0),
                },
            );
        }
    }
    OracleReport { patterns, purity, roles }
}
