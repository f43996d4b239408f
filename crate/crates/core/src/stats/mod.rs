//! Descriptive statistics: claimant behavior per tier, attrition, contract
//! ranking, tier mix per cluster and holding period/quantity distributions.

mod kde;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusterAssignment, Share};
use crate::flows::{OperationKind, TransactionFlow};
use crate::ingest::{ClaimRecord, ContractCategory, EventKind, EventStore, Tier};
use crate::types::{Address, Timestamp, TokenAmount, SECONDS_PER_DAY};

pub use kde::{kde, silverman_bandwidth, BandwidthRule, DensityEstimate, GRID_POINTS};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("sample contains non-finite values")]
    NonFinite,
    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Sell,
    Buy,
    Stake,
    Send,
    Receive,
    Lp,
}

impl Action {
    pub const ALL: [Action; 6] = [Action::Sell, Action::Buy, Action::Stake, Action::Send, Action::Receive, Action::Lp];

    fn matches(self, op: OperationKind) -> bool {
        use OperationKind::*;
        match self {
            Action::Sell => op == Sell,
            Action::Buy => op == Buy,
            Action::Stake => op == Stake,
            Action::Send => op == Send,
            Action::Receive => op == Receive,
            Action::Lp => op == LpAdd || op == LpRemove,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Action::Sell => "sell",
            Action::Buy => "buy",
            Action::Stake => "stake",
            Action::Send => "send",
            Action::Receive => "receive",
            Action::Lp => "lp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierBehavior {
    pub tier: Tier,
    pub claimed: u64,
    pub actions: BTreeMap<Action, Share>,
}

/// Share of each tier's claimants that performed each action at least once.
/// The claim payout is not a Receive.
pub fn behavior_table(
    flows: &BTreeMap<Address, TransactionFlow>,
    claims: &BTreeMap<Address, ClaimRecord>,
) -> Vec<TierBehavior> {
    Tier::ALL
        .iter()
        .map(|tier| {
            let members: Vec<&Address> = claims.values().filter(|c| c.tier == *tier).map(|c| &c.address).collect();
            let total = members.len() as u64;
            let actions = Action::ALL
                .iter()
                .map(|a| {
                    let n = members
                        .iter()
                        .filter(|m| {
                            flows.get(**m).is_some_and(|f| f.events.iter().any(|e| !e.is_claim && a.matches(e.op)))
                        })
                        .count() as u64;
                    (*a, Share::new(n, total))
                })
                .collect();
            TierBehavior { tier: *tier, claimed: total, actions }
        })
        .collect()
}

/// Total tokens handed out by the claims.
pub fn total_claimed(claims: &BTreeMap<Address, ClaimRecord>) -> TokenAmount {
    claims.values().map(|c| c.amount).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttritionReport {
    pub cutoff: Timestamp,
    pub left: Share,
    pub per_tier: BTreeMap<Tier, Share>,
    pub claimed: TokenAmount,
    pub held: TokenAmount,
    /// `claimed - held`; negative when members bought more than they sold.
    pub outflow: i128,
    pub outflow_pct: f64,
}

/// Wallet + staked + LP position of a flow at `cutoff`.
pub fn holdings_at(flow: &TransactionFlow, cutoff: Timestamp) -> TokenAmount {
    flow.events
        .iter()
        .take_while(|e| e.timestamp <= cutoff)
        .last()
        .map(|e| e.balance_after + e.staked_after + e.lp_after)
        .unwrap_or_default()
}

/// A claimant has left once balance, staked and LP positions are all zero.
pub fn attrition(
    flows: &BTreeMap<Address, TransactionFlow>,
    claims: &BTreeMap<Address, ClaimRecord>,
    cutoff: Timestamp,
) -> AttritionReport {
    let total = claims.len() as u64;
    let mut left = 0u64;
    let mut per_tier: BTreeMap<Tier, (u64, u64)> = Tier::ALL.iter().map(|t| (*t, (0, 0))).collect();
    let mut held = TokenAmount::ZERO;
    for c in claims.values() {
        let h = flows.get(&c.address).map(|f| holdings_at(f, cutoff)).unwrap_or_default();
        held += h;
        let e = per_tier.get_mut(&c.tier).unwrap();
        e.1 += 1;
        if h.is_zero() {
            left += 1;
            e.0 += 1;
        }
    }
    let claimed = total_claimed(claims);
    let outflow = claimed.0 as i128 - held.0 as i128;
    AttritionReport {
        cutoff,
        left: Share::new(left, total),
        per_tier: per_tier.into_iter().map(|(t, (l, n))| (t, Share::new(l, n))).collect(),
        claimed,
        held,
        outflow,
        outflow_pct: if claimed.is_zero() { 0.0 } else { outflow as f64 * 100.0 / claimed.0 as f64 },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractRank {
    pub address: Address,
    pub name: String,
    pub category: ContractCategory,
    /// Distinct initial members with a token transfer to or from the contract.
    pub members: u64,
}

pub fn top_contracts(store: &EventStore, k: usize) -> Vec<ContractRank> {
    let mut seen: BTreeMap<Address, BTreeSet<Address>> = BTreeMap::new();
    for e in store.events.iter().filter(|e| e.kind == EventKind::TokenTransfer) {
        for (c, m) in [(e.from, e.to), (e.to, e.from)] {
            if store.contracts.contains_key(&c) && store.claims.contains_key(&m) {
                seen.entry(c).or_default().insert(m);
            }
        }
    }
    let mut ranks: Vec<ContractRank> = seen
        .into_iter()
        .map(|(a, m)| {
            let info = &store.contracts[&a];
            ContractRank { address: a, name: info.name.clone(), category: info.category, members: m.len() as u64 }
        })
        .collect();
    ranks.sort_by(|a, b| b.members.cmp(&a.members).then(a.address.cmp(&b.address)));
    ranks.truncate(k);
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierComposition {
    pub cluster: usize,
    pub counts: BTreeMap<Tier, u64>,
    /// Fractions in tier order, summing to 1.
    pub fractions: [f64; 3],
}

pub fn tier_composition(
    assignment: &ClusterAssignment,
    claims: &BTreeMap<Address, ClaimRecord>,
) -> Vec<TierComposition> {
    let mut per: BTreeMap<usize, BTreeMap<Tier, u64>> = BTreeMap::new();
    for (a, l) in &assignment.labels {
        if let Some(c) = claims.get(a) {
            *per.entry(*l).or_insert_with(|| Tier::ALL.iter().map(|t| (*t, 0)).collect()).get_mut(&c.tier).unwrap() +=
                1;
        }
    }
    per.into_iter()
        .map(|(cluster, counts)| {
            let n: u64 = counts.values().sum();
            let mut fractions = [0.0; 3];
            for (t, c) in &counts {
                fractions[t.index()] = *c as f64 / n as f64;
            }
            TierComposition { cluster, counts, fractions }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Holding,
    Staking,
    Lp,
}

impl Activity {
    pub const ALL: [Activity; 3] = [Activity::Holding, Activity::Staking, Activity::Lp];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayPosition {
    pub day: i64,
    pub balance: TokenAmount,
    pub staked: TokenAmount,
    pub lp: TokenAmount,
}

impl DayPosition {
    fn get(&self, a: Activity) -> TokenAmount {
        match a {
            Activity::Holding => self.balance,
            Activity::Staking => self.staked,
            Activity::Lp => self.lp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySpan {
    /// Days from the first to the last nonzero day, inclusive.
    pub period_days: u64,
    /// Mean position over the span, in smallest units.
    pub quantity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldingTimeline {
    pub address: Address,
    /// End-of-day positions from the first event day to the cutoff day.
    pub days: Vec<DayPosition>,
    pub spans: BTreeMap<Activity, ActivitySpan>,
}

/// Daily end-of-day positions of one flow up to `cutoff`.
pub fn holding_timeline(flow: &TransactionFlow, cutoff: Timestamp) -> HoldingTimeline {
    let mut days = Vec::new();
    let events: Vec<_> = flow.events.iter().filter(|e| e.timestamp <= cutoff).collect();
    if let Some(first) = events.first() {
        let start = first.timestamp.div_euclid(SECONDS_PER_DAY);
        let end = cutoff.div_euclid(SECONDS_PER_DAY);
        let mut i = 0;
        let mut cur =
            DayPosition { day: start, balance: TokenAmount::ZERO, staked: TokenAmount::ZERO, lp: TokenAmount::ZERO };
        for day in start..=end {
            while i < events.len() && events[i].timestamp.div_euclid(SECONDS_PER_DAY) <= day {
                cur.balance = events[i].balance_after;
                cur.staked = events[i].staked_after;
                cur.lp = events[i].lp_after;
                i += 1;
            }
            cur.day = day;
            days.push(cur);
        }
    }
    let mut spans = BTreeMap::new();
    for a in Activity::ALL {
        let first = days.iter().position(|d| !d.get(a).is_zero());
        let last = days.iter().rposition(|d| !d.get(a).is_zero());
        if let (Some(f), Some(l)) = (first, last) {
            let period = (l - f + 1) as u64;
            let sum: f64 = days[f..=l].iter().map(|d| d.get(a).0 as f64).sum();
            spans.insert(a, ActivitySpan { period_days: period, quantity: sum / period as f64 });
        }
    }
    HoldingTimeline { address: flow.address, days, spans }
}

pub fn holding_timelines(flows: &BTreeMap<Address, TransactionFlow>, cutoff: Timestamp) -> Vec<HoldingTimeline> {
    let v: Vec<&TransactionFlow> = flows.values().collect();
    v.par_iter().map(|f| holding_timeline(f, cutoff)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityDistribution {
    pub activity: Activity,
    pub periods: Vec<u64>,
    /// Quantities in display units.
    pub quantities: Vec<f64>,
    pub period_density: Option<DensityEstimate>,
    pub quantity_density: Option<DensityEstimate>,
}

/// Period and quantity samples per activity with their density estimates.
pub fn period_quantity_distributions(
    timelines: &[HoldingTimeline],
    decimals: u32,
    rule: BandwidthRule,
) -> Vec<ActivityDistribution> {
    let scale = 10f64.powi(decimals as i32);
    Activity::ALL
        .iter()
        .map(|a| {
            let spans: Vec<&ActivitySpan> = timelines.iter().filter_map(|t| t.spans.get(a)).collect();
            let periods: Vec<u64> = spans.iter().map(|s| s.period_days).collect();
            let quantities: Vec<f64> = spans.iter().map(|s| s.quantity / scale).collect();
            let pf: Vec<f64> = periods.iter().map(|p| *p as f64).collect();
            ActivityDistribution {
                activity: *a,
                period_density: kde(&pf, rule).ok(),
                quantity_density: kde(&quantities, rule).ok(),
                periods,
                quantities,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::FlowEvent;
    use crate::types::TxHash;

    fn addr(n: u32) -> Address {
        let mut b = [0u8; 20];
        b[16..].copy_from_slice(&n.to_be_bytes());
        Address(b)
    }

    fn claim(n: u32, tier: Tier) -> ClaimRecord {
        ClaimRecord { address: addr(n), tier, amount: tier.amount(18), claim_timestamp: 0 }
    }

    fn event(op: OperationKind, ts: i64, bal: u128, staked: u128, is_claim: bool) -> FlowEvent {
        FlowEvent {
            op,
            counterparty: addr(0),
            amount: TokenAmount(1),
            balance_after: TokenAmount(bal),
            staked_after: TokenAmount(staked),
            lp_after: TokenAmount::ZERO,
            timestamp: ts,
            tx_hash: TxHash([0; 32]),
            is_claim,
        }
    }

    #[test]
    fn everyone_stakes() {
        let claims: BTreeMap<_, _> = (1..=4).map(|i| (addr(i), claim(i, Tier::T7800))).collect();
        let flows = claims
            .keys()
            .map(|a| {
                (
                    *a,
                    TransactionFlow {
                        address: *a,
                        events: vec![
                            event(OperationKind::Receive, 0, 10, 0, true),
                            event(OperationKind::Stake, 5, 0, 10, false),
                        ],
                    },
                )
            })
            .collect();
        let t = behavior_table(&flows, &claims);
        let t7800 = &t[1];
        assert_eq!(t7800.actions[&Action::Stake].pct(), 100.0);
        for a in [Action::Sell, Action::Buy, Action::Send, Action::Receive, Action::Lp] {
            assert_eq!(t7800.actions[&a].count, 0);
        }
        let att = attrition(&flows, &claims, 100);
        assert_eq!(att.left.count, 0);
    }

    #[test]
    fn claimed_total_identity() {
        let mut claims = BTreeMap::new();
        let mut n = 0;
        for (tier, count) in [(Tier::T5200, 4291), (Tier::T7800, 6836), (Tier::T10400, 2703)] {
            for _ in 0..count {
                n += 1;
                claims.insert(addr(n), claim(n, tier));
            }
        }
        assert_eq!(total_claimed(&claims), TokenAmount::from_whole(103_745_200, 18));
    }

    #[test]
    fn outflow_is_claimed_minus_held() {
        let claims: BTreeMap<_, _> = [(addr(1), claim(1, Tier::T5200)), (addr(2), claim(2, Tier::T5200))].into();
        let full = Tier::T5200.amount(18).0;
        let flows = [
            (
                addr(1),
                TransactionFlow {
                    address: addr(1),
                    events: vec![
                        event(OperationKind::Receive, 0, full, 0, true),
                        event(OperationKind::Sell, 9, 0, 0, false),
                    ],
                },
            ),
            (
                addr(2),
                TransactionFlow {
                    address: addr(2),
                    events: vec![
                        event(OperationKind::Receive, 0, full, 0, true),
                        event(OperationKind::Stake, 9, full - 5, 5, false),
                    ],
                },
            ),
        ]
        .into();
        let a = attrition(&flows, &claims, 100);
        assert_eq!(a.left, Share::new(1, 2));
        assert_eq!(a.outflow, full as i128);
        assert_eq!(a.per_tier[&Tier::T5200], Share::new(1, 2));
        // before the sale nobody has left
        assert_eq!(attrition(&flows, &claims, 5).left.count, 0);
    }

    #[test]
    fn timeline_period_and_quantity() {
        let d = SECONDS_PER_DAY;
        let flow = TransactionFlow {
            address: addr(1),
            events: vec![
                event(OperationKind::Receive, d * 10, 100, 0, true),
                event(OperationKind::Stake, d * 12 + 5, 40, 60, false),
                event(OperationKind::Sell, d * 14, 0, 60, false),
            ],
        };
        let t = holding_timeline(&flow, d * 20);
        assert_eq!(t.days.len(), 11);
        let h = &t.spans[&Activity::Holding];
        assert_eq!(h.period_days, 4);
        assert_eq!(h.quantity, (100.0 + 100.0 + 40.0 + 40.0) / 4.0);
        let s = &t.spans[&Activity::Staking];
        assert_eq!(s.period_days, 9);
        assert_eq!(s.quantity, 60.0);
        assert!(!t.spans.contains_key(&Activity::Lp));
    }

    #[test]
    fn tier_mix_per_cluster() {
        let claims: BTreeMap<_, _> = (1..=3).map(|i| (addr(i), claim(i, Tier::T7800))).collect();
        let asg = ClusterAssignment {
            labels: (1..=3).map(|i| (addr(i), 1)).collect(),
            k: 1,
            silhouette_by_k: BTreeMap::new(),
            tied_k: vec![],
        };
        assert_eq!(tier_composition(&asg, &claims)[0].fractions, [0.0, 1.0, 0.0]);
    }

    #[test]
    fn empty_store_ranks_nothing() {
        assert!(top_contracts(&EventStore::default(), 10).is_empty());
    }
}
