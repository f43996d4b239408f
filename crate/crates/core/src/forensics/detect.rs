use std::collections::BTreeSet;

use super::components::Local;
use super::{
    CautiousConfig, ChainConfig, ComponentProfile, DetectContext, ForensicsError, MemberRole, PatternFinding,
    PatternKind, PatternMember, SponsorshipConfig, SunflowerConfig,
};
use crate::graphs::NodeClass;
use crate::types::{Address, TokenAmount};

fn accumulates(prev: u128, next: u128, slack: f64) -> bool {
    if slack <= 0.0 {
        next >= prev
    } else {
        next as f64 >= prev as f64 * (1.0 - slack)
    }
}

/// Longest accumulating directed path whose interior nodes forward everything
/// to a single successor. Split/merge variants are covered because a start
/// node may branch and interior nodes may take up to `max_in` inputs.
pub fn detect_chain(c: &ComponentProfile, cfg: &ChainConfig) -> Option<PatternFinding> {
    let l = Local::new(c);
    let interior = |v: usize| l.out[v].len() == 1 && l.inc[v].len() <= cfg.max_in;
    let mut best: Option<(Vec<usize>, Vec<u128>)> = None;
    for u in 0..l.len() {
        for &(v, w) in &l.out[u] {
            let mut path = vec![u, v];
            let mut weights = vec![w];
            let mut cur = v;
            while interior(cur) {
                let (next, w2) = l.out[cur][0];
                if path.contains(&next) || !accumulates(*weights.last().unwrap(), w2, cfg.accumulation_slack) {
                    break;
                }
                path.push(next);
                weights.push(w2);
                cur = next;
            }
            if best.as_ref().is_none_or(|(p, _)| path.len() > p.len()) {
                best = Some((path, weights));
            }
        }
    }
    let (path, weights) = best?;
    let len = path.len() - 1;
    if len < cfg.min_len {
        return None;
    }
    let last = path.len() - 1;
    let members = path
        .iter()
        .enumerate()
        .map(|(i, v)| PatternMember {
            address: l.nodes[*v],
            role: if i == 0 {
                MemberRole::Source
            } else if i == last {
                MemberRole::Sink
            } else {
                MemberRole::Relay
            },
        })
        .collect();
    let hops: Vec<String> = path.iter().map(|v| l.nodes[*v].short()).collect();
    let evidence = vec![
        format!("path {} has {} edges (min {})", hops.join(" -> "), len, cfg.min_len),
        format!(
            "edge weights {:?} non-decreasing within slack {}",
            weights.iter().map(|w| TokenAmount(*w).display_units(18)).collect::<Vec<_>>(),
            cfg.accumulation_slack
        ),
        format!("interior nodes have out-degree 1 and in-degree <= {}", cfg.max_in),
    ];
    Some(PatternFinding {
        component_id: c.id,
        pattern: PatternKind::Chain,
        members,
        evidence,
        aggregate_value: TokenAmount(*weights.last().unwrap()),
    })
}

/// Star aggregation into one center from single-exit spokes.
pub fn detect_sunflower(
    c: &ComponentProfile,
    ctx: &DetectContext<'_>,
    cfg: &SunflowerConfig,
) -> Option<PatternFinding> {
    let l = Local::new(c);
    let spokes_of =
        |v: usize| -> Vec<usize> { l.inc[v].iter().filter(|(u, _)| l.out[*u].len() == 1).map(|(u, _)| *u).collect() };
    let (center, spokes) =
        (0..l.len()).map(|v| (v, spokes_of(v))).max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))?;
    if spokes.len() < cfg.min_spokes {
        return None;
    }
    let center_addr = l.nodes[center];
    let received: u128 = l.inc[center].iter().map(|(_, w)| *w).sum();
    let successor = l.out[center]
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .filter(|(_, w)| *w as f64 >= cfg.forward_frac * received as f64)
        .map(|(s, w)| (*s, *w));
    let staging =
        c.class_of(&center_addr) == Some(NodeClass::LaterMember) && !ctx.contract_touching.contains(&center_addr);
    let pattern = if staging {
        PatternKind::StagingAggregation
    } else if successor.is_some() {
        PatternKind::SunflowerRelay
    } else {
        PatternKind::Sunflower
    };
    let mut evidence = vec![format!(
        "center {} receives from {} single-exit spokes (min {})",
        center_addr.short(),
        spokes.len(),
        cfg.min_spokes
    )];
    let mut members: Vec<PatternMember> =
        spokes.iter().map(|s| PatternMember { address: l.nodes[*s], role: MemberRole::Source }).collect();
    match successor {
        Some((s, w)) => {
            evidence.push(format!(
                "center forwards {} of {} received to {} (>= {})",
                TokenAmount(w).display_units(18),
                TokenAmount(received).display_units(18),
                l.nodes[s].short(),
                cfg.forward_frac
            ));
            members.push(PatternMember { address: center_addr, role: MemberRole::Relay });
            members.push(PatternMember { address: l.nodes[s], role: MemberRole::Sink });
        }
        None => members.push(PatternMember { address: center_addr, role: MemberRole::Sink }),
    }
    if staging {
        evidence.push("center is a later member with no contract interaction".into());
    }
    Some(PatternFinding { component_id: c.id, pattern, members, evidence, aggregate_value: TokenAmount(received) })
}

/// Unordered member pairs joined by an external transaction, over all pairs.
pub(crate) fn external_density(nodes: &[Address], ctx: &DetectContext<'_>) -> (usize, usize, f64) {
    let set: BTreeSet<&Address> = nodes.iter().collect();
    let mut pairs = BTreeSet::new();
    for u in nodes {
        for (v, _) in ctx.external.out_edges(u) {
            if v != u && set.contains(v) {
                pairs.insert(if u < v { (*u, *v) } else { (*v, *u) });
            }
        }
    }
    let n = nodes.len();
    let possible = n * n.saturating_sub(1) / 2;
    let d = if possible == 0 { 0.0 } else { pairs.len() as f64 / possible as f64 };
    (pairs.len(), possible, d)
}

/// Large token aggregation among addresses barely linked before the airdrop.
pub fn detect_cautious(c: &ComponentProfile, ctx: &DetectContext<'_>, cfg: &CautiousConfig) -> Option<PatternFinding> {
    let n = c.len();
    if n < cfg.min_size {
        return None;
    }
    let l = Local::new(c);
    let (sink, reach) = (0..n).map(|v| (v, l.ancestors(v))).max_by(|a, b| {
        let ca = a.1.iter().filter(|x| **x).count();
        let cb = b.1.iter().filter(|x| **x).count();
        ca.cmp(&cb).then(b.0.cmp(&a.0))
    })?;
    let reached_from = reach.iter().filter(|x| **x).count() - 1;
    if 2 * reached_from < n {
        return None;
    }
    let (linked, possible, density) = external_density(&c.nodes, ctx);
    if density >= cfg.max_density {
        return None;
    }
    let members = (0..n)
        .map(|v| PatternMember {
            address: l.nodes[v],
            role: if v == sink {
                MemberRole::Sink
            } else if reach[v] {
                MemberRole::Source
            } else {
                MemberRole::Member
            },
        })
        .collect();
    let aggregate: u128 = l.inc[sink].iter().map(|(_, w)| *w).sum();
    Some(PatternFinding {
        component_id: c.id,
        pattern: PatternKind::CautiousClique,
        members,
        evidence: vec![
            format!("{} members (min {})", n, cfg.min_size),
            format!("{} of {} members reach {}", reached_from, n, l.nodes[sink].short()),
            format!("external density {}/{} = {:.4} < {}", linked, possible, density, cfg.max_density),
        ],
        aggregate_value: TokenAmount(aggregate),
    })
}

/// Common pre-airdrop funders of many claimants that later receive tokens back.
///
/// Returns the finding, or a note when funding matches but no tokens flow back.
pub fn detect_sponsorship(
    c: &ComponentProfile,
    ctx: &DetectContext<'_>,
    cfg: &SponsorshipConfig,
) -> Result<(Option<PatternFinding>, Option<String>), ForensicsError> {
    if !ctx.external_covers_pre_airdrop() {
        return Err(ForensicsError::MissingExternalWindow { airdrop_ts: ctx.airdrop_ts });
    }
    let initial: Vec<&Address> = c.nodes.iter().filter(|a| ctx.is_claimant(a)).collect();
    let mut funded: std::collections::BTreeMap<Address, BTreeSet<Address>> = Default::default();
    for b in &initial {
        for s in ctx.pre_airdrop_funders.get(*b).into_iter().flatten() {
            funded.entry(*s).or_default().insert(**b);
        }
    }
    let mut cands: Vec<(Address, BTreeSet<Address>)> =
        funded.into_iter().filter(|(_, b)| b.len() >= cfg.min_beneficiaries).collect();
    cands.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    let Some((first, first_b)) = cands.first().cloned() else {
        return Ok((None, None));
    };
    let mut sponsors = vec![first];
    let mut beneficiaries = first_b;
    for (s, b) in cands.iter().skip(1) {
        let common: BTreeSet<Address> = beneficiaries.intersection(b).copied().collect();
        if common.len() >= cfg.min_beneficiaries {
            sponsors.push(*s);
            beneficiaries = common;
        }
    }
    if sponsors.len() < cfg.min_sponsors {
        return Ok((None, None));
    }
    sponsors.sort();
    // sponsors themselves, or non-claimants tied to a sponsor off-token
    let targets: Vec<Address> = c
        .nodes
        .iter()
        .filter(|x| {
            sponsors.contains(x) || (!ctx.is_claimant(x) && sponsors.iter().any(|s| ctx.external.has_edge_either(x, s)))
        })
        .copied()
        .collect();
    let l = Local::new(c);
    let pos = |a: &Address| c.nodes.binary_search(a).unwrap();
    let mut reaches = vec![false; l.len()];
    for t in &targets {
        for (i, r) in l.ancestors(pos(t)).into_iter().enumerate() {
            reaches[i] |= r;
        }
    }
    let returners: Vec<&Address> = beneficiaries.iter().filter(|b| reaches[pos(b)]).collect();
    let sponsor_list: Vec<String> = sponsors.iter().map(|s| s.short()).collect();
    if returners.is_empty() {
        let note = format!(
            "component {}: {} claimants share funders [{}] but send nothing back (weak signal)",
            c.id,
            beneficiaries.len(),
            sponsor_list.join(", ")
        );
        log::info!("{note}");
        return Ok((None, Some(note)));
    }
    let mut members: Vec<PatternMember> =
        sponsors.iter().map(|s| PatternMember { address: *s, role: MemberRole::Sponsor }).collect();
    members.extend(
        targets.iter().filter(|t| !sponsors.contains(t)).map(|t| PatternMember { address: *t, role: MemberRole::Sink }),
    );
    members.extend(beneficiaries.iter().map(|b| PatternMember { address: *b, role: MemberRole::Source }));
    let returned: u128 = targets.iter().flat_map(|t| l.inc[pos(t)].iter()).map(|(_, w)| *w).sum();
    Ok((
        Some(PatternFinding {
            component_id: c.id,
            pattern: PatternKind::SponsorshipClique,
            members,
            evidence: vec![
                format!(
                    "{} sponsors [{}] funded each of {} claimants before the airdrop (min {} / {})",
                    sponsors.len(),
                    sponsor_list.join(", "),
                    beneficiaries.len(),
                    cfg.min_sponsors,
                    cfg.min_beneficiaries
                ),
                format!("{} beneficiaries send tokens back toward the sponsors", returners.len()),
            ],
            aggregate_value: TokenAmount(returned),
        }),
        None,
    ))
}
