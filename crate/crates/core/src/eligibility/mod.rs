//! Threshold-differential airdrop filter: activity thresholds, recent protocol
//! interactions, clique exclusion and activity-graded reward tiers.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forensics::{maximal_cliques, undirected_adjacency};
use crate::graphs::CommunityGraph;
use crate::ingest::{ContractCategory, EventKind, EventStore, Tier};
use crate::types::{parse_decimal_scaled, Address, Timestamp, SECONDS_PER_DAY};

#[derive(Debug, Error, PartialEq)]
pub enum EligibilityError {
    #[error("interaction window starts at {window_start}, before history begins at {history_start}")]
    InsufficientHistory { window_start: Timestamp, history_start: Timestamp },
    #[error("invalid rules: {0}")]
    InvalidRules(String),
    #[error("export: {0}")]
    Io(String),
}

/// Scores in `min..=max` (no upper bound when `max` is absent) earn `tier`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierBand {
    pub min: u64,
    pub max: Option<u64>,
    pub tier: Tier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EligibilityRules {
    pub min_tx_count: u64,
    /// Chain -> minimum native balance in whole units, as a decimal string.
    pub min_native_balance: BTreeMap<String, String>,
    pub native_decimals: u32,
    pub min_interactions: u64,
    /// `None` counts interactions over the whole history.
    pub interaction_window_days: Option<u32>,
    /// Members of a larger clique are excluded; `None` disables the rule.
    pub max_clique: Option<usize>,
    pub tiers: Vec<TierBand>,
}

impl Default for EligibilityRules {
    fn default() -> Self {
        EligibilityRules {
            min_tx_count: 50,
            min_native_balance: [("eth", "0.028"), ("bnb", "0.25"), ("matic", "20"), ("avax", "0.9")]
                .into_iter()
                .map(|(c, v)| (c.to_string(), v.to_string()))
                .collect(),
            native_decimals: 18,
            min_interactions: 6,
            interaction_window_days: Some(182),
            max_clique: Some(5),
            tiers: vec![
                TierBand { min: 6, max: Some(10), tier: Tier::T5200 },
                TierBand { min: 11, max: Some(25), tier: Tier::T7800 },
                TierBand { min: 26, max: None, tier: Tier::T10400 },
            ],
        }
    }
}

impl EligibilityRules {
    /// Single tier and no thresholds: anyone who interacted qualifies.
    pub fn fair_allocation() -> Self {
        EligibilityRules {
            min_tx_count: 1,
            min_native_balance: BTreeMap::new(),
            native_decimals: 18,
            min_interactions: 1,
            interaction_window_days: None,
            max_clique: None,
            tiers: vec![TierBand { min: 1, max: None, tier: Tier::T5200 }],
        }
    }

    /// Checks the rules and returns the per-chain minimums in smallest units.
    pub fn validate(&self) -> Result<BTreeMap<String, u128>, EligibilityError> {
        let bad = |m: String| Err(EligibilityError::InvalidRules(m));
        if self.min_tx_count == 0 || self.min_interactions == 0 {
            return bad("counts must be positive".into());
        }
        if self.max_clique == Some(0) {
            return bad("max_clique must be positive".into());
        }
        if self.tiers.is_empty() {
            return bad("tier table is empty".into());
        }
        if self.tiers[0].min > self.min_interactions {
            return bad(format!(
                "tier table starts at {} but eligibility starts at {}",
                self.tiers[0].min, self.min_interactions
            ));
        }
        for w in self.tiers.windows(2) {
            match w[0].max {
                Some(m) if m >= w[0].min && m + 1 == w[1].min => {}
                _ => return bad(format!("tier bands {:?} and {:?} leave a gap or overlap", w[0], w[1])),
            }
        }
        if self.tiers.last().unwrap().max.is_some() {
            return bad("last tier band must be open-ended".into());
        }
        let mut mins = BTreeMap::new();
        for (chain, v) in &self.min_native_balance {
            let x = parse_decimal_scaled(v, self.native_decimals)
                .map_err(|e| EligibilityError::InvalidRules(format!("balance for {chain}: {e}")))?;
            mins.insert(chain.to_lowercase(), x);
        }
        Ok(mins)
    }

    pub fn tier_for(&self, score: u64) -> Option<Tier> {
        self.tiers.iter().find(|b| score >= b.min && b.max.is_none_or(|m| score <= m)).map(|b| b.tier)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressHistory {
    /// Timestamps of transactions sent by the address.
    pub sent: Vec<Timestamp>,
    /// Timestamps of calls into protocol contracts.
    pub interactions: Vec<Timestamp>,
    /// Chain -> native balance in smallest units.
    pub balances: BTreeMap<String, u128>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EligibilityHistory {
    pub accounts: BTreeMap<Address, AddressHistory>,
    /// Undirected direct-transfer links between non-contract addresses, with
    /// the time each pair was first linked.
    pub links: BTreeMap<(Address, Address), Timestamp>,
    pub history_start: Timestamp,
}

impl EligibilityHistory {
    /// History from the external transactions of a store. Protocol contracts
    /// are dictionary entries other than exchanges.
    pub fn from_store(store: &EventStore, history_start: Option<Timestamp>) -> Self {
        let mut accounts: BTreeMap<Address, AddressHistory> = BTreeMap::new();
        let mut links: BTreeMap<(Address, Address), Timestamp> = BTreeMap::new();
        let undocumented = store.undocumented_contracts();
        let is_contract = |a: &Address| store.contracts.contains_key(a) || undocumented.contains(a);
        let mut earliest = Timestamp::MAX;
        for e in store.events.iter().filter(|e| e.kind == EventKind::ExternalTx) {
            earliest = earliest.min(e.timestamp);
            let h = accounts.entry(e.from).or_default();
            h.sent.push(e.timestamp);
            if store.category(&e.to).is_some_and(|c| c != ContractCategory::Cex) {
                h.interactions.push(e.timestamp);
            }
            if e.from != e.to && !is_contract(&e.from) && !is_contract(&e.to) {
                let key = if e.from < e.to { (e.from, e.to) } else { (e.to, e.from) };
                links.entry(key).and_modify(|t| *t = (*t).min(e.timestamp)).or_insert(e.timestamp);
            }
        }
        for (a, chains) in &store.balances {
            accounts.entry(*a).or_default().balances = chains.iter().map(|(c, v)| (c.to_lowercase(), *v)).collect();
        }
        EligibilityHistory {
            accounts,
            links,
            history_start: history_start.unwrap_or(if earliest == Timestamp::MAX { 0 } else { earliest }),
        }
    }

    /// Size of the largest clique containing each address, using links made
    /// up to `snapshot`.
    pub fn clique_sizes(&self, snapshot: Timestamp) -> BTreeMap<Address, usize> {
        let mut g = CommunityGraph::default();
        for ((a, b), t) in &self.links {
            if *t <= snapshot {
                g.edges.insert(
                    (*a, *b),
                    crate::graphs::EdgeAggregate {
                        total_value: Default::default(),
                        tx_count: 1,
                        first_ts: *t,
                        last_ts: *t,
                    },
                );
            }
        }
        let adj = undirected_adjacency(&g, |_| true);
        let mut best = BTreeMap::new();
        for c in maximal_cliques(&adj) {
            for a in &c {
                let e = best.entry(*a).or_insert(0);
                *e = c.len().max(*e);
            }
        }
        best
    }

    /// Addresses that sent at least one transaction, the default campaign population.
    pub fn interacting(&self) -> Vec<Address> {
        self.accounts.iter().filter(|(_, h)| !h.sent.is_empty()).map(|(a, _)| *a).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Reason {
    TxCount { count: u64, min: u64, passed: bool },
    NativeBalance { chain: Option<String>, passed: bool },
    Interactions { count: u64, min: u64, window_start: Option<Timestamp>, passed: bool },
    CliqueExclusion { size: usize, max: Option<usize>, passed: bool },
    Tier { score: u64, tier: Option<Tier> },
}

impl Reason {
    pub fn passed(&self) -> bool {
        match self {
            Reason::TxCount { passed, .. }
            | Reason::NativeBalance { passed, .. }
            | Reason::Interactions { passed, .. }
            | Reason::CliqueExclusion { passed, .. } => *passed,
            Reason::Tier { tier, .. } => tier.is_some(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Reason::TxCount { .. } => "tx_count",
            Reason::NativeBalance { .. } => "native_balance",
            Reason::Interactions { .. } => "interactions",
            Reason::CliqueExclusion { .. } => "clique_exclusion",
            Reason::Tier { .. } => "tier",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityVerdict {
    pub address: Address,
    pub eligible: bool,
    pub tier: Option<Tier>,
    /// Rule checks in evaluation order.
    pub reasons: Vec<Reason>,
}

impl EligibilityVerdict {
    pub fn reason(&self, name: &str) -> Option<&Reason> {
        self.reasons.iter().find(|r| r.name() == name)
    }

    pub fn clique_passed(&self) -> bool {
        self.reason("clique_exclusion").is_none_or(|r| r.passed())
    }
}

/// Derive the verdict again from its own rule trace. `None` when the trace
/// contradicts itself.
pub fn replay(v: &EligibilityVerdict) -> Option<(bool, Option<Tier>)> {
    let mut activity = false;
    let mut interactions = false;
    let mut clique = true;
    let mut tier = None;
    for r in &v.reasons {
        match r {
            Reason::TxCount { count, min, passed } => {
                if (*count >= *min) != *passed {
                    return None;
                }
                activity |= passed;
            }
            Reason::NativeBalance { passed, .. } => activity |= passed,
            Reason::Interactions { count, min, passed, .. } => {
                if (*count >= *min) != *passed {
                    return None;
                }
                interactions = *passed;
            }
            Reason::CliqueExclusion { size, max, passed } => {
                if max.is_none_or(|m| *size <= m) != *passed {
                    return None;
                }
                clique = *passed;
            }
            Reason::Tier { tier: t, .. } => tier = *t,
        }
    }
    let eligible = activity && interactions && clique && tier.is_some();
    Some((eligible, if eligible { tier } else { None }))
}

/// Validated rules plus data shared across a campaign.
pub struct Evaluator<'a> {
    rules: &'a EligibilityRules,
    min_balance: BTreeMap<String, u128>,
    history: &'a EligibilityHistory,
    cliques: BTreeMap<Address, usize>,
    snapshot: Timestamp,
    window_start: Option<Timestamp>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        history: &'a EligibilityHistory,
        rules: &'a EligibilityRules,
        snapshot: Timestamp,
    ) -> Result<Self, EligibilityError> {
        let min_balance = rules.validate()?;
        let window_start = rules.interaction_window_days.map(|d| snapshot - d as i64 * SECONDS_PER_DAY);
        if let Some(ws) = window_start {
            if ws < history.history_start {
                return Err(EligibilityError::InsufficientHistory {
                    window_start: ws,
                    history_start: history.history_start,
                });
            }
        }
        let cliques = if rules.max_clique.is_some() { history.clique_sizes(snapshot) } else { BTreeMap::new() };
        Ok(Evaluator { rules, min_balance, history, cliques, snapshot, window_start })
    }

    pub fn evaluate(&self, address: &Address) -> EligibilityVerdict {
        let empty = AddressHistory::default();
        let h = self.history.accounts.get(address).unwrap_or(&empty);
        let r = self.rules;
        let tx = h.sent.iter().filter(|t| **t <= self.snapshot).count() as u64;
        let chain = self
            .min_balance
            .iter()
            .find(|(c, min)| h.balances.get(*c).is_some_and(|b| b >= *min))
            .map(|(c, _)| c.clone());
        let inter = h
            .interactions
            .iter()
            .filter(|t| **t <= self.snapshot && self.window_start.is_none_or(|ws| **t > ws))
            .count() as u64;
        let clique = self.cliques.get(address).copied().unwrap_or(1);
        let mut reasons = vec![
            Reason::TxCount { count: tx, min: r.min_tx_count, passed: tx >= r.min_tx_count },
            Reason::NativeBalance { passed: chain.is_some(), chain },
            Reason::Interactions {
                count: inter,
                min: r.min_interactions,
                window_start: self.window_start,
                passed: inter >= r.min_interactions,
            },
        ];
        if r.max_clique.is_some() {
            reasons.push(Reason::CliqueExclusion {
                size: clique,
                max: r.max_clique,
                passed: r.max_clique.is_none_or(|m| clique <= m),
            });
        }
        reasons.push(Reason::Tier { score: inter, tier: r.tier_for(inter) });
        let mut v = EligibilityVerdict { address: *address, eligible: false, tier: None, reasons };
        let (eligible, tier) = replay(&v).expect("fresh trace is consistent");
        v.eligible = eligible;
        v.tier = tier;
        v
    }
}

/// Single-address evaluation.
pub fn evaluate(
    address: &Address,
    history: &EligibilityHistory,
    rules: &EligibilityRules,
    snapshot: Timestamp,
) -> Result<EligibilityVerdict, EligibilityError> {
    Ok(Evaluator::new(history, rules, snapshot)?.evaluate(address))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub population: u64,
    pub eligible: u64,
    pub tier_counts: BTreeMap<Tier, u64>,
    /// Failed rule -> number of addresses failing it. An address failing
    /// both activity checks counts once under `activity`.
    pub exclusions: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub verdicts: Vec<EligibilityVerdict>,
    pub summary: CampaignSummary,
}

pub fn run_campaign(
    population: &[Address],
    history: &EligibilityHistory,
    rules: &EligibilityRules,
    snapshot: Timestamp,
) -> Result<CampaignResult, EligibilityError> {
    let ev = Evaluator::new(history, rules, snapshot)?;
    let unique: Vec<Address> = population.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let verdicts: Vec<EligibilityVerdict> = unique.par_iter().map(|a| ev.evaluate(a)).collect();
    let mut s = CampaignSummary { population: verdicts.len() as u64, ..Default::default() };
    for t in Tier::ALL {
        s.tier_counts.insert(t, 0);
    }
    for v in &verdicts {
        if let Some(t) = v.tier {
            s.eligible += 1;
            *s.tier_counts.entry(t).or_default() += 1;
        }
        let failed = |n: &str| v.reason(n).is_some_and(|r| !r.passed());
        let mut bump = |k: &str| *s.exclusions.entry(k.to_string()).or_default() += 1;
        if failed("tx_count") && failed("native_balance") {
            bump("activity");
        }
        if failed("interactions") {
            bump("interactions");
        }
        if failed("clique_exclusion") {
            bump("clique_exclusion");
        }
        if !failed("interactions") && failed("tier") {
            bump("tier");
        }
    }
    Ok(CampaignResult { verdicts, summary: s })
}

/// `address,eligible,tier,tx_count,interactions,clique_size,failed_rules`
pub fn write_verdicts_csv<W: Write>(verdicts: &[EligibilityVerdict], out: W) -> Result<(), EligibilityError> {
    let io = |e: csv::Error| EligibilityError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["address", "eligible", "tier", "tx_count", "interactions", "clique_size", "failed_rules"])
        .map_err(io)?;
    for v in verdicts {
        let mut tx = String::new();
        let mut inter = String::new();
        let mut clique = String::new();
        for r in &v.reasons {
            match r {
                Reason::TxCount { count, .. } => tx = count.to_string(),
                Reason::Interactions { count, .. } => inter = count.to_string(),
                Reason::CliqueExclusion { size, .. } => clique = size.to_string(),
                _ => {}
            }
        }
        let failed: Vec<&str> = v.reasons.iter().filter(|r| !r.passed()).map(|r| r.name()).collect();
        w.write_record([
            v.address.to_string(),
            v.eligible.to_string(),
            v.tier.map(|t| t.face_value().to_string()).unwrap_or_default(),
            tx,
            inter,
            clique,
            failed.join(";"),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| EligibilityError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SNAP: Timestamp = 400 * SECONDS_PER_DAY;

    fn addr(n: u32) -> Address {
        let mut b = [0u8; 20];
        b[16..].copy_from_slice(&n.to_be_bytes());
        Address(b)
    }

    fn account(sent: u64, interactions: u64, eth_milli: u128) -> AddressHistory {
        let day = |i: u64| SNAP - (i as i64 % 150 + 1) * SECONDS_PER_DAY;
        AddressHistory {
            sent: (0..sent).map(day).collect(),
            interactions: (0..interactions).map(day).collect(),
            balances: [("eth".to_string(), eth_milli * 10u128.pow(15))].into_iter().collect(),
        }
    }

    fn history(accounts: Vec<(Address, AddressHistory)>) -> EligibilityHistory {
        EligibilityHistory { accounts: accounts.into_iter().collect(), links: BTreeMap::new(), history_start: 0 }
    }

    fn link_clique(h: &mut EligibilityHistory, members: &[Address]) {
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                h.links.insert(if a < b { (*a, *b) } else { (*b, *a) }, 0);
            }
        }
    }

    #[test]
    fn all_rules_pass() {
        let h = history(vec![(addr(1), account(60, 7, 0))]);
        let v = evaluate(&addr(1), &h, &EligibilityRules::default(), SNAP).unwrap();
        assert!(v.eligible);
        assert_eq!(v.tier, Some(Tier::T5200));
        assert_eq!(replay(&v), Some((true, Some(Tier::T5200))));
    }

    #[test]
    fn balance_branch() {
        let h = history(vec![(addr(1), account(10, 6, 30))]);
        let v = evaluate(&addr(1), &h, &EligibilityRules::default(), SNAP).unwrap();
        assert!(v.eligible);
        assert!(matches!(v.reason("native_balance"), Some(Reason::NativeBalance { passed: true, .. })));
        let h = history(vec![(addr(1), account(10, 6, 27))]);
        assert!(!evaluate(&addr(1), &h, &EligibilityRules::default(), SNAP).unwrap().eligible);
    }

    #[test]
    fn clique_of_six_excluded_five_passes() {
        let members6: Vec<Address> = (1..=6).map(addr).collect();
        let members5: Vec<Address> = (11..=15).map(addr).collect();
        let mut h = history(members6.iter().chain(&members5).map(|a| (*a, account(60, 30, 0))).collect());
        link_clique(&mut h, &members6);
        link_clique(&mut h, &members5);
        let all: Vec<Address> = members6.iter().chain(&members5).copied().collect();
        let res = run_campaign(&all, &h, &EligibilityRules::default(), SNAP).unwrap();
        for v in &res.verdicts {
            let in6 = members6.contains(&v.address);
            assert_eq!(v.eligible, !in6);
            assert_eq!(v.clique_passed(), !in6);
        }
        assert_eq!(res.summary.exclusions["clique_exclusion"], 6);
        assert_eq!(res.summary.tier_counts[&Tier::T10400], 5);
    }

    #[test]
    fn insufficient_history() {
        let mut h = history(vec![]);
        h.history_start = SNAP - 100 * SECONDS_PER_DAY;
        assert!(matches!(
            evaluate(&addr(1), &h, &EligibilityRules::default(), SNAP),
            Err(EligibilityError::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn fair_allocation_admits_every_interacting_address() {
        let h = history((1..=20).map(|i| (addr(i), account(1, 1, 0))).collect());
        let res = run_campaign(&h.interacting(), &h, &EligibilityRules::fair_allocation(), SNAP).unwrap();
        assert_eq!(res.summary.eligible, 20);
    }

    #[test]
    fn more_interactions_never_hurt() {
        let rules = EligibilityRules::default();
        let mut was = false;
        for k in 0..40 {
            let h = history(vec![(addr(1), account(55, k, 0))]);
            let now = evaluate(&addr(1), &h, &rules, SNAP).unwrap().eligible;
            assert!(!(was && !now));
            was = now;
        }
        assert!(was);
    }

    #[test]
    fn rule_validation() {
        let mut r = EligibilityRules::default();
        r.tiers[1].min = 12;
        assert!(r.validate().is_err());
        let mut r = EligibilityRules::default();
        r.tiers[2].max = Some(100);
        assert!(r.validate().is_err());
        let mut r = EligibilityRules::default();
        r.min_native_balance.insert("eth".into(), "-1".into());
        assert!(r.validate().is_err());
        assert_eq!(EligibilityRules::default().tier_for(25), Some(Tier::T7800));
        assert_eq!(EligibilityRules::default().tier_for(5), None);
    }

    #[test]
    fn tampered_trace_is_rejected() {
        let h = history(vec![(addr(1), account(60, 7, 0))]);
        let mut v = evaluate(&addr(1), &h, &EligibilityRules::default(), SNAP).unwrap();
        v.reasons[0] = Reason::TxCount { count: 3, min: 50, passed: true };
        assert_eq!(replay(&v), None);
    }
}
