use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CommunityGraph, GraphError};

/// Compact simple digraph: parallel edges collapsed, self-loops dropped.
#[derive(Debug, Clone, Default)]
pub struct Digraph {
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
    edges: usize,
}

impl Digraph {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        for (u, v) in edges {
            if u != v {
                out[u].push(v);
            }
        }
        let mut count = 0;
        for (u, succ) in out.iter_mut().enumerate() {
            succ.sort_unstable();
            succ.dedup();
            count += succ.len();
            for &v in succ.iter() {
                inc[v].push(u);
            }
        }
        Digraph { out, inc, edges: count }
    }

    pub fn from_community(g: &CommunityGraph) -> Self {
        let index: BTreeMap<_, _> = g.nodes.keys().enumerate().map(|(i, a)| (*a, i)).collect();
        Self::from_edges(g.nodes.len(), g.edges.keys().map(|(f, t)| (index[f], index[t])))
    }

    pub fn node_count(&self) -> usize {
        self.out.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn successors(&self, u: usize) -> &[usize] {
        &self.out[u]
    }

    pub fn predecessors(&self, u: usize) -> &[usize] {
        &self.inc[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.out[u].binary_search(&v).is_ok()
    }
}

/// Fraction of (non-loop) edges whose reverse edge also exists.
pub fn reciprocity(g: &Digraph) -> Result<f64, GraphError> {
    if g.edge_count() == 0 {
        return Err(GraphError::UndefinedOnEmpty);
    }
    let mutual: usize =
        (0..g.node_count()).map(|u| g.successors(u).iter().filter(|&&v| g.has_edge(v, u)).count()).sum();
    Ok(mutual as f64 / g.edge_count() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssortativityVariant {
    /// out-degree of the source against in-degree of the target
    #[default]
    OutIn,
    /// total degree at both ends
    TotalTotal,
}

/// Pearson correlation of endpoint degrees over the edges.
///
/// Sums are accumulated exactly in integers so that the zero-variance test is exact.
pub fn degree_assortativity(g: &Digraph, variant: AssortativityVariant) -> Result<f64, GraphError> {
    let n = g.node_count();
    let (src_deg, dst_deg): (Vec<i128>, Vec<i128>) = match variant {
        AssortativityVariant::OutIn => (
            (0..n).map(|u| g.successors(u).len() as i128).collect(),
            (0..n).map(|u| g.predecessors(u).len() as i128).collect(),
        ),
        AssortativityVariant::TotalTotal => {
            let total: Vec<i128> = (0..n).map(|u| (g.successors(u).len() + g.predecessors(u).len()) as i128).collect();
            (total.clone(), total)
        }
    };
    let (mut m, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0i128, 0i128, 0i128, 0i128, 0i128, 0i128);
    for u in 0..n {
        for &v in g.successors(u) {
            let (x, y) = (src_deg[u], dst_deg[v]);
            m += 1;
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
    }
    if m < 2 {
        return Err(GraphError::UndefinedOnDegenerate);
    }
    let cov = m * sxy - sx * sy;
    let var_x = m * sxx - sx * sx;
    let var_y = m * syy - sy * sy;
    if var_x == 0 || var_y == 0 {
        return Err(GraphError::UndefinedOnDegenerate);
    }
    let r = cov as f64 / ((var_x as f64).sqrt() * (var_y as f64).sqrt());
    Ok(r.clamp(-1.0, 1.0))
}

/// Strongly connected component id for every node (iterative Tarjan).
pub(crate) fn scc_ids(g: &Digraph) -> (Vec<usize>, usize) {
    const UNVISITED: usize = usize::MAX;
    let n = g.node_count();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNVISITED; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut comps = 0;
    // (node, position in successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (u, ref mut pos)) = call.last_mut() {
            if let Some(&v) = g.successors(u).get(*pos) {
                *pos += 1;
                if index[v] == UNVISITED {
                    index[v] = next_index;
                    low[v] = next_index;
                    next_index += 1;
                    stack.push(v);
                    on_stack[v] = true;
                    call.push((v, 0));
                } else if on_stack[v] {
                    low[u] = low[u].min(index[v]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[u]);
            }
            if low[u] == index[u] {
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp[w] = comps;
                    if w == u {
                        break;
                    }
                }
                comps += 1;
            }
        }
    }
    (comp, comps)
}

/// Number of strongly connected components with no edge leaving them.
/// Sink nodes count as attracting components of size one.
pub fn attracting_components(g: &Digraph) -> usize {
    let (comp, count) = scc_ids(g);
    let mut terminal = vec![true; count];
    for u in 0..g.node_count() {
        for &v in g.successors(u) {
            if comp[u] != comp[v] {
                terminal[comp[u]] = false;
            }
        }
    }
    terminal.iter().filter(|t| **t).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reciprocity_basics() {
        let g = Digraph::from_edges(2, [(0, 1), (1, 0)]);
        assert_eq!(reciprocity(&g).unwrap(), 1.0);
        let g = Digraph::from_edges(2, [(0, 1)]);
        assert_eq!(reciprocity(&g).unwrap(), 0.0);
        let g = Digraph::from_edges(2, [(0, 0)]);
        assert!(matches!(reciprocity(&g), Err(GraphError::UndefinedOnEmpty)));
    }

    #[test]
    fn star_assortativity_undefined() {
        let g = Digraph::from_edges(6, (1..6).map(|l| (0, l)));
        assert!(matches!(
            degree_assortativity(&g, AssortativityVariant::OutIn),
            Err(GraphError::UndefinedOnDegenerate)
        ));
    }

    #[test]
    fn hand_pearson() {
        // mutual pairs 1<->2, 3<->4, hub 0 -> {1,2,3,4}, extra 5 -> 0
        let edges = [(1, 2), (2, 1), (3, 4), (4, 3), (0, 1), (0, 2), (0, 3), (0, 4), (5, 0)];
        let g = Digraph::from_edges(6, edges);
        // out = [4,1,1,1,1,1]; in = [1,2,2,2,2,0]
        let pairs: [(f64, f64); 9] =
            [(1., 2.), (1., 2.), (1., 2.), (1., 2.), (4., 2.), (4., 2.), (4., 2.), (4., 2.), (1., 1.)];
        let n = pairs.len() as f64;
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let cov: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let vx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let vy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
        let expected = cov / (vx.sqrt() * vy.sqrt());
        let r = degree_assortativity(&g, AssortativityVariant::OutIn).unwrap();
        assert!((r - expected).abs() < 1e-12, "{r} vs {expected}");
        assert!(r > 0.0);
    }

    #[test]
    fn hub_wired_to_two_mutual_pairs_is_disassortative() {
        // pure out-hub leaves the target marginal constant
        let edges = [(1, 2), (2, 1), (3, 4), (4, 3), (0, 1), (0, 2), (0, 3), (0, 4)];
        assert!(degree_assortativity(&Digraph::from_edges(5, edges), AssortativityVariant::OutIn).is_err());
        // mixed direction hub: 0 -> 1,2 ; 3,4 -> 0
        let edges = [(1, 2), (2, 1), (3, 4), (4, 3), (0, 1), (0, 2), (3, 0), (4, 0)];
        let g = Digraph::from_edges(5, edges);
        // out=[2,1,1,2,2], in=[2,2,2,1,1]
        // pairs: (1,2) 1->2, (1,2) 2->1, (2,1) 3->4, (2,1) 4->3, (2,2) 0->1, (2,2) 0->2, (2,2) 3->0, (2,2) 4->0
        let pairs = [(1., 2.), (1., 2.), (2., 1.), (2., 1.), (2., 2.), (2., 2.), (2., 2.), (2., 2.)];
        let n = pairs.len() as f64;
        let mx = pairs.iter().map(|p: &(f64, f64)| p.0).sum::<f64>() / n;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let cov: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let vx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let vy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
        let expected = cov / (vx.sqrt() * vy.sqrt());
        let r = degree_assortativity(&g, AssortativityVariant::OutIn).unwrap();
        assert!((r - expected).abs() < 1e-12);
        assert!(r < 0.0, "{r}");
    }

    #[test]
    fn attracting_component_cases() {
        assert_eq!(attracting_components(&Digraph::from_edges(3, [(0, 1), (0, 2)])), 2);
        let cycle_with_entry = Digraph::from_edges(4, [(0, 1), (1, 2), (2, 0), (3, 0)]);
        assert_eq!(attracting_components(&cycle_with_entry), 1);
        assert_eq!(attracting_components(&Digraph::from_edges(5, [])), 5);
        assert_eq!(attracting_components(&Digraph::from_edges(0, [])), 0);
    }

    #[test]
    fn deep_path_does_not_overflow() {
        let n = 200_000;
        let g = Digraph::from_edges(n, (0..n - 1).map(|i| (i, i + 1)));
        assert_eq!(attracting_components(&g), 1);
    }
}
