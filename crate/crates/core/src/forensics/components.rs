use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ForensicsError;
use crate::graphs::{reciprocity, CommunityGraph, Digraph, EdgeAggregate, NodeClass};
use crate::types::{Address, TokenAmount};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentProfile {
    pub id: usize,
    /// Sorted member addresses.
    pub nodes: Vec<Address>,
    pub classes: Vec<NodeClass>,
    /// `(from, to, aggregate)` sorted by endpoints.
    pub edges: Vec<(Address, Address, EdgeAggregate)>,
    pub n_initial: usize,
    pub n_later: usize,
    pub reciprocity: f64,
    pub total_value: TokenAmount,
}

impl ComponentProfile {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, a: &Address) -> bool {
        self.nodes.binary_search(a).is_ok()
    }

    pub fn class_of(&self, a: &Address) -> Option<NodeClass> {
        self.nodes.binary_search(a).ok().map(|i| self.classes[i])
    }
}

/// Index-based view of one component used by the detectors.
pub(crate) struct Local<'a> {
    pub nodes: &'a [Address],
    pub out: Vec<Vec<(usize, u128)>>,
    pub inc: Vec<Vec<(usize, u128)>>,
}

impl<'a> Local<'a> {
    pub fn new(c: &'a ComponentProfile) -> Self {
        let n = c.nodes.len();
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        for (f, t, e) in &c.edges {
            let (i, j) = (c.nodes.binary_search(f).unwrap(), c.nodes.binary_search(t).unwrap());
            out[i].push((j, e.total_value.0));
            inc[j].push((i, e.total_value.0));
        }
        Local { nodes: &c.nodes, out, inc }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes that can reach `target` along directed edges, `target` included.
    pub fn ancestors(&self, target: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        seen[target] = true;
        let mut stack = vec![target];
        while let Some(v) = stack.pop() {
            for &(u, _) in &self.inc[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen
    }
}

/// Weakly connected components of the token graph after removing contracts
/// (dictionary entries, CEX included, plus anything in `exclude`) and
/// isolates. Ids follow descending size, then smallest member address.
pub fn p2p_components(token: &CommunityGraph, exclude: &BTreeSet<Address>) -> Vec<ComponentProfile> {
    let keep = |a: &Address| token.class_of(a) != Some(NodeClass::Contract) && !exclude.contains(a);
    let edges: Vec<(&(Address, Address), &EdgeAggregate)> =
        token.edges.iter().filter(|((f, t), _)| f != t && keep(f) && keep(t)).collect();
    let mut index: BTreeMap<Address, usize> = BTreeMap::new();
    for ((f, t), _) in &edges {
        let n = index.len();
        index.entry(*f).or_insert(n);
        let n = index.len();
        index.entry(*t).or_insert(n);
    }
    let mut parent: Vec<usize> = (0..index.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for ((f, t), _) in &edges {
        let (a, b) = (find(&mut parent, index[f]), find(&mut parent, index[t]));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: BTreeMap<usize, Vec<Address>> = BTreeMap::new();
    for (a, i) in &index {
        let r = find(&mut parent, *i);
        groups.entry(r).or_default().push(*a);
    }
    let mut edge_groups: BTreeMap<usize, Vec<(Address, Address, EdgeAggregate)>> = BTreeMap::new();
    for ((f, t), e) in &edges {
        let r = find(&mut parent, index[f]);
        edge_groups.entry(r).or_default().push((*f, *t, **e));
    }
    let mut comps: Vec<(Vec<Address>, Vec<(Address, Address, EdgeAggregate)>)> =
        groups.into_iter().map(|(r, nodes)| (nodes, edge_groups.remove(&r).unwrap_or_default())).collect();
    // nodes are sorted because they came out of a BTreeMap walk
    comps.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0[0].cmp(&b.0[0])));
    comps
        .into_iter()
        .enumerate()
        .map(|(id, (nodes, mut edges))| {
            edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
            let classes: Vec<NodeClass> =
                nodes.iter().map(|a| token.class_of(a).unwrap_or(NodeClass::LaterMember)).collect();
            let pos = |a: &Address| nodes.binary_search(a).unwrap();
            let g = Digraph::from_edges(nodes.len(), edges.iter().map(|(f, t, _)| (pos(f), pos(t))));
            ComponentProfile {
                id,
                n_initial: classes.iter().filter(|c| **c == NodeClass::InitialMember).count(),
                n_later: classes.iter().filter(|c| **c == NodeClass::LaterMember).count(),
                reciprocity: reciprocity(&g).unwrap_or(0.0),
                total_value: edges.iter().map(|e| e.2.total_value).sum(),
                nodes,
                classes,
                edges,
            }
        })
        .collect()
}

/// Subgraph of one component, for GraphML/DOT export.
pub fn component_graph(c: &ComponentProfile) -> CommunityGraph {
    CommunityGraph {
        nodes: c.nodes.iter().copied().zip(c.classes.iter().copied()).collect(),
        edges: c.edges.iter().map(|(f, t, e)| ((*f, *t), *e)).collect(),
    }
}

/// `id,nodes,edges,n_initial,n_later,reciprocity,total_value` per component.
pub fn write_component_census_csv<W: Write>(
    comps: &[ComponentProfile],
    decimals: u32,
    out: W,
) -> Result<(), ForensicsError> {
    let io = |e: csv::Error| ForensicsError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "nodes", "edges", "n_initial", "n_later", "reciprocity", "total_value"]).map_err(io)?;
    for c in comps {
        w.write_record([
            c.id.to_string(),
            c.nodes.len().to_string(),
            c.edges.len().to_string(),
            c.n_initial.to_string(),
            c.n_later.to_string(),
            format!("{:.6}", c.reciprocity),
            c.total_value.display_units(decimals),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| ForensicsError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn addr(n: u8) -> Address {
        let mut b = [0u8; 20];
        b[19] = n;
        Address(b)
    }

    fn graph(nodes: &[(u8, NodeClass)], edges: &[(u8, u8, u128)]) -> CommunityGraph {
        let mut g = CommunityGraph::default();
        for (n, c) in nodes {
            g.nodes.insert(addr(*n), *c);
        }
        for (f, t, v) in edges {
            g.edges.insert(
                (addr(*f), addr(*t)),
                EdgeAggregate { total_value: TokenAmount(*v), tx_count: 1, first_ts: 0, last_ts: 0 },
            );
        }
        g
    }

    #[test]
    fn contract_only_edges_give_nothing() {
        use NodeClass::*;
        let g = graph(&[(1, InitialMember), (2, InitialMember), (9, Contract)], &[(9, 1, 5), (2, 9, 5)]);
        assert!(p2p_components(&g, &BTreeSet::new()).is_empty());
    }

    #[test]
    fn two_triangles() {
        use NodeClass::*;
        let nodes: Vec<(u8, NodeClass)> =
            (1..=6).map(|i| (i, if i % 2 == 0 { LaterMember } else { InitialMember })).collect();
        let g = graph(&nodes, &[(1, 2, 1), (2, 3, 1), (3, 1, 1), (4, 5, 2), (5, 6, 2), (6, 4, 2), (4, 6, 2)]);
        let comps = p2p_components(&g, &BTreeSet::new());
        assert_eq!(comps.len(), 2);
        let sizes: usize = comps.iter().map(|c| c.len()).sum();
        assert_eq!(sizes, 6);
        // equal sizes order by smallest member
        assert_eq!(comps[0].nodes, vec![addr(1), addr(2), addr(3)]);
        assert_eq!(comps[0].n_initial, 2);
        assert_eq!(comps[0].n_later, 1);
        assert_eq!(comps[0].reciprocity, 0.0);
        assert_eq!(comps[1].edges.len(), 4);
        assert_eq!(comps[1].reciprocity, 0.5);
        assert_eq!(comps[1].total_value, TokenAmount(8));
    }

    #[test]
    fn excluded_addresses_split_components() {
        use NodeClass::*;
        let g = graph(&[(1, InitialMember), (2, LaterMember), (3, InitialMember)], &[(1, 2, 1), (2, 3, 1)]);
        assert_eq!(p2p_components(&g, &BTreeSet::new()).len(), 1);
        assert!(p2p_components(&g, &[addr(2)].into_iter().collect()).is_empty());
    }
}
