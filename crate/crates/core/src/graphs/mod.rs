//! Aggregated community graphs (token and external), temporal slicing and
//! network-level metrics.

mod export;
mod metrics;
mod slices;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{EventKind, EventStore, TransferEvent};
use crate::types::{Address, Timestamp, TokenAmount};

pub use export::{read_graph_csv, write_dot, write_graph_csv, write_graphml};
pub use metrics::{attracting_components, degree_assortativity, reciprocity, AssortativityVariant, Digraph};
pub use slices::{metric_series, slice_cutoffs, weekly_slices, GraphSlice, MetricPoint, MetricSeries};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("metric undefined on a graph without edges")]
    UndefinedOnEmpty,
    #[error("metric undefined: zero variance in a degree marginal")]
    UndefinedOnDegenerate,
    #[error("no events between {start} and {end}")]
    WindowEmpty { start: Timestamp, end: Timestamp },
    #[error("window start {start} is not before end {end}")]
    InvalidWindow { start: Timestamp, end: Timestamp },
    #[error("slice interval must be positive")]
    InvalidInterval,
    #[error("graph file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeClass {
    InitialMember,
    LaterMember,
    Contract,
    Plain,
}

impl NodeClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeClass::InitialMember => "initial_member",
            NodeClass::LaterMember => "later_member",
            NodeClass::Contract => "contract",
            NodeClass::Plain => "plain",
        }
    }
}

impl fmt::Display for NodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "initial_member" => Ok(NodeClass::InitialMember),
            "later_member" => Ok(NodeClass::LaterMember),
            "contract" => Ok(NodeClass::Contract),
            "plain" => Ok(NodeClass::Plain),
            _ => Err(format!("unknown node class {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeAggregate {
    pub total_value: TokenAmount,
    pub tx_count: u64,
    pub first_ts: Timestamp,
    pub last_ts: Timestamp,
}

/// Directed graph where parallel events between the same ordered pair are
/// aggregated into one weighted edge.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommunityGraph {
    pub nodes: BTreeMap<Address, NodeClass>,
    pub edges: BTreeMap<(Address, Address), EdgeAggregate>,
}

impl CommunityGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn class_of(&self, a: &Address) -> Option<NodeClass> {
        self.nodes.get(a).copied()
    }

    pub fn add_event(&mut self, e: &TransferEvent, classify: impl Fn(&Address) -> NodeClass) {
        self.nodes.entry(e.from).or_insert_with(|| classify(&e.from));
        self.nodes.entry(e.to).or_insert_with(|| classify(&e.to));
        self.edges
            .entry((e.from, e.to))
            .and_modify(|agg| {
                agg.total_value += e.value;
                agg.tx_count += 1;
                agg.first_ts = agg.first_ts.min(e.timestamp);
                agg.last_ts = agg.last_ts.max(e.timestamp);
            })
            .or_insert(EdgeAggregate {
                total_value: e.value,
                tx_count: 1,
                first_ts: e.timestamp,
                last_ts: e.timestamp,
            });
    }

    pub fn edge(&self, from: &Address, to: &Address) -> Option<&EdgeAggregate> {
        self.edges.get(&(*from, *to))
    }

    pub fn has_edge_either(&self, a: &Address, b: &Address) -> bool {
        self.edges.contains_key(&(*a, *b)) || self.edges.contains_key(&(*b, *a))
    }

    pub fn out_edges<'a>(&'a self, from: &Address) -> impl Iterator<Item = (&'a Address, &'a EdgeAggregate)> + 'a {
        let lo = (*from, Address([0u8; 20]));
        let hi = (*from, Address([0xffu8; 20]));
        self.edges.range(lo..=hi).map(|((_, to), agg)| (to, agg))
    }

    /// Earliest first-seen timestamp over all edges.
    pub fn earliest_timestamp(&self) -> Option<Timestamp> {
        self.edges.values().map(|e| e.first_ts).min()
    }
}

/// Node classification shared by the token graph and its slices.
pub(crate) fn token_node_class(store: &EventStore, a: &Address) -> NodeClass {
    if store.claims.contains_key(a) {
        NodeClass::InitialMember
    } else if store.contracts.contains_key(a) {
        NodeClass::Contract
    } else {
        NodeClass::LaterMember
    }
}

pub(crate) fn external_node_class(store: &EventStore, a: &Address) -> NodeClass {
    if store.claims.contains_key(a) {
        NodeClass::InitialMember
    } else if store.contracts.contains_key(a) {
        NodeClass::Contract
    } else {
        NodeClass::Plain
    }
}

fn build_graph(store: &EventStore, kind: EventKind, classify: impl Fn(&Address) -> NodeClass) -> CommunityGraph {
    let mut g = CommunityGraph::default();
    for e in store.events.iter().filter(|e| e.kind == kind) {
        g.add_event(e, &classify);
    }
    g
}

/// Token-transfer graph with claimants, contracts and later members classified.
pub fn build_token_graph(store: &EventStore) -> CommunityGraph {
    build_graph(store, EventKind::TokenTransfer, |a| token_node_class(store, a))
}

pub fn build_external_graph(store: &EventStore) -> CommunityGraph {
    build_graph(store, EventKind::ExternalTx, |a| external_node_class(store, a))
}
