//! Agglomerative clustering of feature vectors, silhouette-based choice of K
//! and the mapping from clusters to member roles.

mod ahc;
mod roles;
mod silhouette;

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flows::{FeatureVector, FlowError, Weights};
use crate::types::Address;

pub use ahc::{ahc, ahc_matrix, Dendrogram, DistanceMatrix, Merge};
pub use roles::{map_roles, role_for_ops, ClusterSummary, RoleLabel, RoleMapping, Share};
pub use silhouette::silhouette;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("k = {k} out of range for {n} points")]
    KOutOfRange { k: usize, n: usize },
    #[error("degenerate clustering: {0}")]
    DegenerateClustering(String),
    #[error("invalid cluster config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("export: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    #[default]
    Single,
    Complete,
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub linkage: Linkage,
    pub k_min: usize,
    pub k_max: usize,
    pub weights: Weights,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { linkage: Linkage::Single, k_min: 2, k_max: 20, weights: Weights::uniform() }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.k_min < 2 || self.k_min > self.k_max {
            return Err(ClusterError::InvalidConfig(format!(
                "k range [{}, {}] must be nonempty with minimum >= 2",
                self.k_min, self.k_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: BTreeMap<Address, usize>,
    pub k: usize,
    pub silhouette_by_k: BTreeMap<usize, f64>,
    /// Other K values whose score tied the winner.
    pub tied_k: Vec<usize>,
}

const TIE_EPS: f64 = 1e-12;

/// Build the dendrogram once, score every K in range and keep the best.
/// Ties go to the larger K.
pub fn select_k(
    addresses: &[Address],
    features: &[FeatureVector],
    config: &ClusterConfig,
) -> Result<(ClusterAssignment, Dendrogram), ClusterError> {
    config.validate()?;
    let n = features.len();
    if addresses.len() != n {
        return Err(ClusterError::DegenerateClustering("addresses and features differ in length".into()));
    }
    if n <= config.k_max {
        return Err(ClusterError::KOutOfRange { k: config.k_max, n });
    }
    let dendro = ahc(features, config.linkage)?;
    let scored: Vec<(usize, Vec<usize>, f64)> = (config.k_min..=config.k_max)
        .into_par_iter()
        .map(|k| {
            let labels = dendro.cut(k)?;
            let s = silhouette(features, &labels)?;
            Ok((k, labels, s))
        })
        .collect::<Result<_, ClusterError>>()?;
    let best = scored.iter().map(|(_, _, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = scored.iter().filter(|(_, _, s)| best - s <= TIE_EPS).map(|(k, _, _)| *k).collect();
    let k = *winners.last().expect("nonempty range");
    let tied_k: Vec<usize> = winners.into_iter().filter(|x| *x != k).collect();
    if !tied_k.is_empty() {
        log::info!("silhouette tie between K = {k} and {tied_k:?}; keeping {k}");
    }
    let mut silhouette_by_k = BTreeMap::new();
    let mut chosen = Vec::new();
    for (kk, labels, s) in scored {
        silhouette_by_k.insert(kk, s);
        if kk == k {
            chosen = labels;
        }
    }
    let labels = addresses.iter().copied().zip(chosen).collect();
    Ok((ClusterAssignment { labels, k, silhouette_by_k, tied_k }, dendro))
}

/// `address,cluster,role` rows; the role column is empty for unmapped clusters.
pub fn write_assignment_csv<W: Write>(
    assignment: &ClusterAssignment,
    roles: &RoleMapping,
    out: W,
) -> Result<(), ClusterError> {
    let io = |e: csv::Error| ClusterError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["address", "cluster", "role"]).map_err(io)?;
    for (a, l) in &assignment.labels {
        let role = roles.roles.get(a).map(|r| r.as_str()).unwrap_or("");
        w.write_record([a.to_string(), l.to_string(), role.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| ClusterError::Io(e.to_string()))
}

/// One row per cluster: size, share, characteristic operations and role.
pub fn write_cluster_table_csv<W: Write>(roles: &RoleMapping, out: W) -> Result<(), ClusterError> {
    let io = |e: csv::Error| ClusterError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cluster", "size", "share_pct", "operations", "role"]).map_err(io)?;
    for c in &roles.clusters {
        let ops: Vec<&str> = c.operations.iter().map(|o| o.name()).collect();
        w.write_record([
            c.cluster.to_string(),
            c.size.to_string(),
            format!("{:.2}", c.share.pct()),
            if ops.is_empty() { "holding".to_string() } else { ops.join("+") },
            c.role.map(|r| r.as_str().to_string()).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| ClusterError::Io(e.to_string()))
}

/// `{"k": .., "ties": [..], "curve": [{"k": .., "silhouette": ..}, ..]}`
pub fn silhouette_curve_json(assignment: &ClusterAssignment) -> serde_json::Value {
    let curve: Vec<serde_json::Value> =
        assignment.silhouette_by_k.iter().map(|(k, s)| serde_json::json!({"k": k, "silhouette": s})).collect();
    serde_json::json!({"k": assignment.k, "ties": assignment.tied_k, "curve": curve})
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(i: usize) -> Address {
        let mut b = [0u8; 20];
        b[16..].copy_from_slice(&(i as u32).to_be_bytes());
        Address(b)
    }

    fn population(patterns: &[(u8, usize)]) -> (Vec<Address>, Vec<FeatureVector>) {
        let mut f = Vec::new();
        for (bits, count) in patterns {
            for _ in 0..*count {
                f.push(FeatureVector::from_bits(*bits, Weights::uniform()));
            }
        }
        ((0..f.len()).map(addr).collect(), f)
    }

    #[test]
    fn two_archetypes_give_two_clusters() {
        let (a, f) = population(&[(0b10, 15), (0b1000000, 10)]);
        let cfg = ClusterConfig { k_max: 5, ..Default::default() };
        let (asg, _) = select_k(&a, &f, &cfg).unwrap();
        assert_eq!(asg.k, 2);
        assert_eq!(asg.silhouette_by_k[&2], 1.0);
    }

    #[test]
    fn distinct_archetypes_recovered() {
        let pats: Vec<(u8, usize)> = [1u8, 2, 4, 16, 64, 6, 66, 0].iter().map(|b| (*b, 5)).collect();
        let (a, f) = population(&pats);
        let (asg, _) = select_k(&a, &f, &ClusterConfig { k_max: 12, ..Default::default() }).unwrap();
        assert_eq!(asg.k, 8);
        for chunk in asg.labels.values().copied().collect::<Vec<_>>().chunks(5) {
            assert!(chunk.iter().all(|l| *l == chunk[0]));
        }
    }

    #[test]
    fn config_validation() {
        let bad = ClusterConfig { k_min: 1, ..Default::default() };
        assert!(bad.validate().is_err());
        let (a, f) = population(&[(1, 5)]);
        assert!(matches!(select_k(&a, &f, &ClusterConfig::default()), Err(ClusterError::KOutOfRange { .. })));
    }

    #[test]
    fn permutation_gives_same_partition() {
        let (a, f) = population(&[(1, 4), (2, 3), (3, 2), (12, 3)]);
        let cfg = ClusterConfig { k_max: 6, ..Default::default() };
        let (x, _) = select_k(&a, &f, &cfg).unwrap();
        let mut idx: Vec<usize> = (0..f.len()).collect();
        idx.reverse();
        let a2: Vec<Address> = idx.iter().map(|i| a[*i]).collect();
        let f2: Vec<FeatureVector> = idx.iter().map(|i| f[*i]).collect();
        let (y, _) = select_k(&a2, &f2, &cfg).unwrap();
        assert_eq!(x.k, y.k);
        let groups = |asg: &ClusterAssignment| {
            let mut g: BTreeMap<usize, Vec<Address>> = BTreeMap::new();
            for (ad, l) in &asg.labels {
                g.entry(*l).or_default().push(*ad);
            }
            let mut v: Vec<Vec<Address>> = g.into_values().collect();
            v.sort();
            v
        };
        assert_eq!(groups(&x), groups(&y));
    }
}
