use std::collections::{BTreeMap, BTreeSet};

use super::components::Local;
use super::{BlatantConfig, ComponentProfile, DetectContext, MemberRole, PatternFinding, PatternKind, PatternMember};
use crate::graphs::CommunityGraph;
use crate::types::{Address, TokenAmount};

/// Undirected projection of `g` restricted to nodes accepted by `keep`.
pub fn undirected_adjacency(
    g: &CommunityGraph,
    keep: impl Fn(&Address) -> bool,
) -> BTreeMap<Address, BTreeSet<Address>> {
    let mut adj: BTreeMap<Address, BTreeSet<Address>> = BTreeMap::new();
    for (f, t) in g.edges.keys() {
        if f != t && keep(f) && keep(t) {
            adj.entry(*f).or_default().insert(*t);
            adj.entry(*t).or_default().insert(*f);
        }
    }
    adj
}

/// All maximal cliques (Bron–Kerbosch with pivoting), each sorted, in
/// lexicographic order.
pub fn maximal_cliques(adj: &BTreeMap<Address, BTreeSet<Address>>) -> Vec<Vec<Address>> {
    fn bk(
        adj: &BTreeMap<Address, BTreeSet<Address>>,
        r: &mut Vec<Address>,
        mut p: BTreeSet<Address>,
        mut x: BTreeSet<Address>,
        out: &mut Vec<Vec<Address>>,
    ) {
        if p.is_empty() && x.is_empty() {
            let mut c = r.clone();
            c.sort();
            out.push(c);
            return;
        }
        let empty = BTreeSet::new();
        let nb = |v: &Address| adj.get(v).unwrap_or(&empty);
        let pivot = *p.iter().chain(x.iter()).max_by_key(|u| nb(u).intersection(&p).count()).unwrap();
        let cands: Vec<Address> = p.difference(nb(&pivot)).copied().collect();
        for v in cands {
            let n = nb(&v);
            r.push(v);
            bk(adj, r, p.intersection(n).copied().collect(), x.intersection(n).copied().collect(), out);
            r.pop();
            p.remove(&v);
            x.insert(v);
        }
    }
    let mut out = Vec::new();
    let p: BTreeSet<Address> = adj.keys().copied().collect();
    bk(adj, &mut Vec::new(), p, BTreeSet::new(), &mut out);
    out.sort();
    out
}

/// Claimant cliques in the external graph whose members all route tokens
/// to one of them afterwards.
pub fn detect_blatant(
    ctx: &DetectContext<'_>,
    components: &[ComponentProfile],
    cfg: &BlatantConfig,
) -> Vec<PatternFinding> {
    let adj = undirected_adjacency(ctx.external, |a| ctx.is_claimant(a) && !ctx.is_contract(a));
    let comp_of: BTreeMap<Address, usize> =
        components.iter().enumerate().flat_map(|(i, c)| c.nodes.iter().map(move |a| (*a, i))).collect();
    let mut out = Vec::new();
    for clique in maximal_cliques(&adj) {
        if clique.len() < cfg.min || clique.len() > cfg.max {
            continue;
        }
        // everyone must share one p2p component for tokens to converge
        let Some(ci) = comp_of.get(&clique[0]).copied() else { continue };
        if clique.iter().any(|a| comp_of.get(a) != Some(&ci)) {
            continue;
        }
        let comp = &components[ci];
        let l = Local::new(comp);
        let pos = |a: &Address| comp.nodes.binary_search(a).unwrap();
        let sink = clique.iter().find(|t| {
            let anc = l.ancestors(pos(t));
            clique.iter().all(|m| anc[pos(m)])
        });
        let Some(sink) = sink else { continue };
        let inflow: u128 = l.inc[pos(sink)].iter().map(|(_, w)| *w).sum();
        let names: Vec<String> = clique.iter().map(|a| a.short()).collect();
        out.push(PatternFinding {
            component_id: comp.id,
            pattern: PatternKind::BlatantClique,
            members: clique
                .iter()
                .map(|a| PatternMember {
                    address: *a,
                    role: if a == sink { MemberRole::Sink } else { MemberRole::Source },
                })
                .collect(),
            evidence: vec![
                format!(
                    "external clique of {} claimants [{}] (size range {}..={})",
                    clique.len(),
                    names.join(", "),
                    cfg.min,
                    cfg.max
                ),
                format!("every member reaches {} in the token graph", sink.short()),
            ],
            aggregate_value: TokenAmount(inflow),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(n: u8) -> Address {
        let mut b = [0u8; 20];
        b[19] = n;
        Address(b)
    }

    #[test]
    fn cliques_of_two_overlapping_triangles() {
        let mut adj: BTreeMap<Address, BTreeSet<Address>> = BTreeMap::new();
        for (a, b) in [(1, 2), (2, 3), (1, 3), (3, 4), (2, 4), (5, 6)] {
            adj.entry(addr(a)).or_default().insert(addr(b));
            adj.entry(addr(b)).or_default().insert(addr(a));
        }
        let c = maximal_cliques(&adj);
        assert_eq!(c, vec![vec![addr(1), addr(2), addr(3)], vec![addr(2), addr(3), addr(4)], vec![addr(5), addr(6)]]);
    }
}
