use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use super::*;
use crate::clustering::{ahc, map_roles, ClusterAssignment, Linkage};
use crate::eligibility::{run_campaign, EligibilityHistory, EligibilityRules};
use crate::flows::{build_all_flows, extract_features, ClassifyConfig, Weights};
use crate::forensics::{
    detect_sunflower, p2p_components, run_detectors, DetectContext, DetectorConfig, PatternFinding, SunflowerConfig,
};
use crate::graphs::{build_external_graph, build_token_graph};
use crate::stats::{attrition, behavior_table, top_contracts};

fn detect(out: &SynthOutput) -> Vec<PatternFinding> {
    let store = out.to_store().unwrap();
    let token = build_token_graph(&store);
    let external = build_external_graph(&store);
    let ctx = DetectContext::from_store(&store, &token, &external);
    let comps = p2p_components(&token, &ctx.contracts);
    run_detectors(&ctx, &comps, &DetectorConfig::default()).findings
}

fn mixed_spec(seed: u64) -> ScenarioSpec {
    let mut spec = ScenarioSpec::reference_mix(seed, 400);
    spec.patterns = vec![
        PatternSpec::new(PlantKind::Chain, 3),
        PatternSpec::new(PlantKind::Sunflower, 3),
        PatternSpec::new(PlantKind::Relay, 3),
        PatternSpec::new(PlantKind::Staging, 3),
        PatternSpec::new(PlantKind::Sponsorship, 3),
        PatternSpec::new(PlantKind::Cautious, 3),
        PatternSpec::new(PlantKind::Blatant, 3),
        PatternSpec::new(PlantKind::ExcludedClique, 1),
    ];
    spec.noise = NoiseSpec { traders: 150, edge_rate: 0.3, decoys: 12, external_edges: 200 };
    spec
}

#[test]
fn same_seed_same_bytes() {
    let spec = mixed_spec(11);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate(&spec).unwrap().write_to_dir(a.path()).unwrap();
    generate(&spec).unwrap().write_to_dir(b.path()).unwrap();
    let names: BTreeSet<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(names.len() >= 8);
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
    let other = generate(&mixed_spec(12)).unwrap();
    assert_ne!(other.claims, generate(&spec).unwrap().claims);
}

#[test]
fn written_files_ingest_back() {
    let out = generate(&mixed_spec(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.write_to_dir(dir.path()).unwrap();
    let loaded = crate::ingest::EventStore::load_canonical(dir.path(), &out.ingest_config()).unwrap();
    let direct = out.to_store().unwrap();
    assert_eq!(loaded.events, direct.events);
    assert_eq!(loaded.claims, direct.claims);
    assert_eq!(read_ground_truth(dir.path()).unwrap(), out.truth);
}

#[test]
fn speculators_only_form_one_cluster() {
    let out = generate(&ScenarioSpec::with_population(5, [(Archetype::Selling, 100)])).unwrap();
    let store = out.to_store().unwrap();
    let addrs: Vec<Address> = store.claims.keys().copied().collect();
    let flows = build_all_flows(&store, &addrs, ClassifyConfig::default());
    let features: BTreeMap<Address, _> =
        flows.iter().map(|(a, f)| (*a, extract_features(&f.flow, Weights::uniform()))).collect();
    let sell = OperationKind::Sell.bit();
    assert!(features.values().all(|f| f.bits() == sell));
    let ordered: Vec<_> = features.values().cloned().collect();
    let d = ahc(&ordered, Linkage::Single).unwrap();
    assert!(d.heights().iter().all(|h| *h == 0.0));
    let labels = d.cut(1).unwrap();
    let assignment = ClusterAssignment {
        labels: features.keys().copied().zip(labels).collect(),
        k: 1,
        silhouette_by_k: BTreeMap::new(),
        tied_k: Vec::new(),
    };
    let roles = map_roles(&assignment, &features);
    assert_eq!(roles.clusters.len(), 1);
    assert!(roles.roles.values().all(|r| *r == RoleLabel::Speculator));
    assert_eq!(roles.roles.len(), 100);
}

#[test]
fn eight_spoke_sunflower_is_found_once() {
    let mut spec = ScenarioSpec::default();
    spec.seed = 8;
    spec.patterns = vec![PatternSpec::sized(PlantKind::Sunflower, 1, 8)];
    let out = generate(&spec).unwrap();
    let store = out.to_store().unwrap();
    let token = build_token_graph(&store);
    let external = build_external_graph(&store);
    let ctx = DetectContext::from_store(&store, &token, &external);
    let comps = p2p_components(&token, &ctx.contracts);
    let found: Vec<_> = comps.iter().filter_map(|c| detect_sunflower(c, &ctx, &SunflowerConfig::default())).collect();
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].with_role(MemberRole::Source).count(), 8);
    let planted = &out.truth.instances[0];
    assert_eq!(found[0].addresses(), planted.addresses());
}

#[test]
fn every_claimant_reproduces_its_planted_bits() {
    let out = generate(&mixed_spec(21)).unwrap();
    let store = out.to_store().unwrap();
    let addrs: Vec<Address> = store.claims.keys().copied().collect();
    let flows = build_all_flows(&store, &addrs, ClassifyConfig::default());
    for (a, f) in &flows {
        assert!(f.issues.is_empty(), "{a}: {:?}", f.issues);
        let bits = extract_features(&f.flow, Weights::uniform()).bits();
        assert_eq!(bits, out.truth.planted_bits[a], "{a}");
    }
    for (a, arch) in &out.truth.archetype_of {
        assert_eq!(out.truth.planted_bits[a], arch.bits());
    }
}

#[test]
fn planted_stats_match_analysis() {
    let out = generate(&mixed_spec(4)).unwrap();
    let store = out.to_store().unwrap();
    let addrs: Vec<Address> = store.claims.keys().copied().collect();
    let flows: BTreeMap<_, _> =
        build_all_flows(&store, &addrs, ClassifyConfig::default()).into_iter().map(|(a, f)| (a, f.flow)).collect();
    let ps = &out.truth.planted_stats;
    for row in behavior_table(&flows, &store.claims) {
        assert_eq!(row.claimed, ps.claimants[&row.tier]);
        for (action, share) in &row.actions {
            assert_eq!(share.count, ps.actions[&row.tier][action], "{:?} {:?}", row.tier, action);
        }
    }
    let rep = attrition(&flows, &store.claims, out.spec.window.end);
    assert_eq!(rep.claimed, ps.total_claimed);
    assert_eq!(rep.held, ps.held);
    for (t, s) in &rep.per_tier {
        assert_eq!(s.count, ps.left[t]);
    }
    for rank in top_contracts(&store, 10) {
        assert_eq!(rank.members, ps.contract_members[&rank.address]);
    }
}

#[test]
fn detectors_recover_planted_patterns() {
    let out = generate(&mixed_spec(33)).unwrap();
    let findings = detect(&out);
    let report = oracle_compare(&out.truth, &findings, None);
    for (kind, score) in &report.patterns {
        assert!(score.instances > 0, "{kind:?} never planted");
        assert_eq!(score.precision, 1.0, "{kind:?} {score:?}");
        assert_eq!(score.recall, 1.0, "{kind:?} {score:?}");
    }
}

#[test]
fn planted_cliques_meet_the_eligibility_clique_rule() {
    let out = generate(&mixed_spec(9)).unwrap();
    let store = out.to_store().unwrap();
    let history = EligibilityHistory::from_store(&store, None);
    let rules = EligibilityRules::default();
    let mut pop = Vec::new();
    for i in out.truth.planted(PlantKind::Blatant).chain(out.truth.planted(PlantKind::ExcludedClique)) {
        pop.extend(i.addresses());
    }
    let res = run_campaign(&pop, &history, &rules, out.truth.eligibility_snapshot).unwrap();
    let verdict: BTreeMap<_, _> = res.verdicts.iter().map(|v| (v.address, v)).collect();
    for i in out.truth.planted(PlantKind::Blatant) {
        for a in i.addresses() {
            assert!(verdict[&a].eligible && verdict[&a].clique_passed(), "{a}");
        }
    }
    for i in out.truth.planted(PlantKind::ExcludedClique) {
        for a in i.addresses() {
            assert!(!verdict[&a].eligible && !verdict[&a].clique_passed(), "{a}");
        }
    }
}

#[test]
fn churn_holders_claim_in_first_slice() {
    let mut spec = ScenarioSpec::default();
    spec.churn = Some(ChurnSpec { holders: 30, pairs_per_interval: 3, interval_days: 7 });
    let out = generate(&spec).unwrap();
    let first = spec.window.start + 7 * crate::types::SECONDS_PER_DAY;
    assert!(out.claims.iter().all(|c| c.claim_timestamp <= first));
    assert_eq!(out.truth.churn_holders.len(), 30);
}

#[test]
fn infeasible_specs_are_rejected() {
    let mut spec = ScenarioSpec::default();
    spec.patterns = vec![PatternSpec::sized(PlantKind::Blatant, 1, 6)];
    assert!(matches!(generate(&spec), Err(SynthError::InfeasibleSpec(_))));
    spec.patterns = vec![PatternSpec::sized(PlantKind::ExcludedClique, 1, 5)];
    assert!(matches!(generate(&spec), Err(SynthError::InfeasibleSpec(_))));
    spec.patterns = vec![PatternSpec::sized(PlantKind::Sunflower, 1, 4)];
    assert!(matches!(generate(&spec), Err(SynthError::InfeasibleSpec(_))));
    spec.patterns.clear();
    spec.tier_mix = [0.5, 0.5, 0.5];
    assert!(matches!(generate(&spec), Err(SynthError::InfeasibleSpec(_))));
    spec.tier_mix = [0.3, 0.5, 0.2];
    spec.churn = Some(ChurnSpec { holders: 3, pairs_per_interval: 2, interval_days: 7 });
    assert!(matches!(generate(&spec), Err(SynthError::InfeasibleSpec(_))));
}

#[test]
fn reference_mix_apportions_exactly() {
    let spec = ScenarioSpec::reference_mix(0, 5000);
    assert_eq!(spec.population.values().sum::<usize>(), 5000);
    assert_eq!(Archetype::ALL.iter().map(|a| a.reference_bp()).sum::<u32>(), 10_000);
    assert_eq!(Archetype::SellingSending.role(), Some(RoleLabel::Speculator));
    assert_eq!(Archetype::BuySendingSelling.role(), Some(RoleLabel::Buyer));
}

fn instance(id: usize, kind: PatternKind, addrs: &[u8]) -> PlantedInstance {
    PlantedInstance {
        id,
        plant: PlantKind::Chain,
        kinds: [kind].into_iter().collect(),
        members: addrs.iter().map(|n| PatternMember { address: addr(*n), role: MemberRole::Member }).collect(),
    }
}

fn addr(n: u8) -> Address {
    let mut b = [0u8; 20];
    b[19] = n;
    Address(b)
}

fn finding(kind: PatternKind, addrs: &[u8]) -> PatternFinding {
    PatternFinding {
        component_id: 0,
        pattern: kind,
        members: addrs.iter().map(|n| PatternMember { address: addr(*n), role: MemberRole::Member }).collect(),
        evidence: Vec::new(),
        aggregate_value: TokenAmount::ZERO,
    }
}

fn truth_with(instances: Vec<PlantedInstance>) -> GroundTruth {
    let z = addr(0);
    GroundTruth {
        seed: 0,
        contracts: SynthContracts { airdrop: z, dex: z, staking: z, pool: z },
        archetype_of: BTreeMap::new(),
        role_of: BTreeMap::new(),
        planted_bits: BTreeMap::new(),
        instances,
        pattern_membership: BTreeMap::new(),
        churn_holders: Vec::new(),
        noise_touched: BTreeSet::new(),
        eligibility_snapshot: 0,
        planted_stats: PlantedStats::default(),
    }
}

#[test]
fn oracle_counts() {
    let k = PatternKind::Chain;
    let instances: Vec<_> = (0..10u8).map(|i| instance(i as usize, k, &[i * 10 + 1, i * 10 + 2, i * 10 + 3])).collect();
    let truth = truth_with(instances);

    let perfect: Vec<_> = (0..10u8).map(|i| finding(k, &[i * 10 + 1, i * 10 + 2, i * 10 + 3])).collect();
    let r = oracle_compare(&truth, &perfect, None);
    assert_eq!((r.patterns[&k].precision, r.patterns[&k].recall), (1.0, 1.0));

    let r = oracle_compare(&truth, &[], None);
    assert_eq!(r.patterns[&k].recall, 0.0);

    let mut some: Vec<_> = (0..9u8).map(|i| finding(k, &[i * 10 + 1, i * 10 + 2, i * 10 + 3])).collect();
    some.push(finding(k, &[200, 201, 202]));
    let r = oracle_compare(&truth, &some, None);
    assert!((r.patterns[&k].precision - 0.9).abs() < 1e-12);
    assert!((r.patterns[&k].recall - 0.9).abs() < 1e-12);

    // a finding of the wrong kind does not count
    let r = oracle_compare(&truth, &[finding(PatternKind::Sunflower, &[1, 2, 3])], None);
    assert_eq!(r.patterns[&PatternKind::Sunflower].precision, 0.0);
}
