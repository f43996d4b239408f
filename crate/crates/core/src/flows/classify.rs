use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FlowError, FlowEvent, FlowIssue, OperationKind, TransactionFlow};
use crate::ingest::{ContractCategory, ContractInfo, EventStore, TransferEvent};
use crate::types::{Address, TokenAmount};

/// How a counterparty labelled "Trading or LP" is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TradingOrLpRule {
    #[default]
    Trading,
    Lp,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    pub trading_or_lp: TradingOrLpRule,
}

pub struct ClassifyContext<'a> {
    pub contracts: &'a BTreeMap<Address, ContractInfo>,
    /// Contracts seen in the data but missing from the dictionary.
    pub undocumented: BTreeSet<Address>,
    pub config: ClassifyConfig,
}

impl<'a> ClassifyContext<'a> {
    pub fn new(store: &'a EventStore, config: ClassifyConfig) -> Self {
        ClassifyContext { contracts: &store.contracts, undocumented: store.undocumented_contracts(), config }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub op: OperationKind,
    pub counterparty: Address,
    pub is_claim: bool,
    pub issue: Option<FlowIssue>,
}

/// Classify one token event from the point of view of `subject`.
pub fn classify_event(event: &TransferEvent, subject: &Address, ctx: &ClassifyContext<'_>) -> Classification {
    use OperationKind::*;
    let outgoing = event.from == *subject;
    let counterparty = if outgoing { event.to } else { event.from };
    let by_dir = |out: OperationKind, inc: OperationKind| if outgoing { out } else { inc };
    let mut issue = None;
    let mut is_claim = false;
    let op = match ctx.contracts.get(&counterparty).map(|c| c.category) {
        Some(ContractCategory::TradingSwap) => by_dir(Sell, Buy),
        Some(ContractCategory::Staking) => by_dir(Stake, Unstake),
        Some(ContractCategory::LiquidityPool) => by_dir(LpAdd, LpRemove),
        Some(ContractCategory::TradingOrLP) => {
            issue = Some(FlowIssue::AmbiguousTradingOrLp { address: counterparty, tx_hash: event.tx_hash });
            match ctx.config.trading_or_lp {
                TradingOrLpRule::Trading => by_dir(Sell, Buy),
                TradingOrLpRule::Lp => by_dir(LpAdd, LpRemove),
            }
        }
        // deposits to an exchange are sales; withdrawals are plain receipts
        Some(ContractCategory::Cex) => by_dir(Sell, Receive),
        Some(ContractCategory::Airdrop) => {
            is_claim = !outgoing;
            by_dir(Send, Receive)
        }
        Some(ContractCategory::Other) => by_dir(Send, Receive),
        None => {
            if ctx.undocumented.contains(&counterparty) {
                issue = Some(FlowIssue::UnknownContract { address: counterparty, tx_hash: event.tx_hash });
            }
            by_dir(Send, Receive)
        }
    };
    Classification { op, counterparty, is_claim, issue }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowBuild {
    pub flow: TransactionFlow,
    pub issues: Vec<FlowIssue>,
}

fn replay(address: Address, events: &[&TransferEvent], ctx: &ClassifyContext<'_>) -> FlowBuild {
    use OperationKind::*;
    let mut balance = TokenAmount::ZERO;
    let mut staked = TokenAmount::ZERO;
    let mut lp = TokenAmount::ZERO;
    let mut out = Vec::with_capacity(events.len());
    let mut issues = Vec::new();
    for e in events {
        let c = classify_event(e, &address, ctx);
        if let Some(i) = c.issue.clone() {
            issues.push(i);
        }
        let amount = e.value;
        if e.from == e.to {
            // self transfer: recorded, balance untouched
            out.push(FlowEvent {
                op: Send,
                counterparty: address,
                amount,
                balance_after: balance,
                staked_after: staked,
                lp_after: lp,
                timestamp: e.timestamp,
                tx_hash: e.tx_hash,
                is_claim: false,
            });
            continue;
        }
        let new_balance =
            if c.op.is_inflow() { Some(balance.saturating_add(amount)) } else { balance.checked_sub(amount) };
        let Some(new_balance) = new_balance else {
            log::warn!("{address}: outflow {} exceeds balance at {}", amount.0, e.timestamp);
            issues.push(FlowIssue::NegativeBalance { timestamp: e.timestamp, tx_hash: e.tx_hash });
            continue;
        };
        balance = new_balance;
        match c.op {
            Stake => staked = staked.saturating_add(amount),
            Unstake => staked = staked.saturating_sub(amount),
            LpAdd => lp = lp.saturating_add(amount),
            LpRemove => lp = lp.saturating_sub(amount),
            _ => {}
        }
        out.push(FlowEvent {
            op: c.op,
            counterparty: c.counterparty,
            amount,
            balance_after: balance,
            staked_after: staked,
            lp_after: lp,
            timestamp: e.timestamp,
            tx_hash: e.tx_hash,
            is_claim: c.is_claim,
        });
    }
    FlowBuild { flow: TransactionFlow { address, events: out }, issues }
}

/// Replay the token history of one address from a zero balance.
pub fn build_flow(address: &Address, store: &EventStore, config: ClassifyConfig) -> Result<FlowBuild, FlowError> {
    let events: Vec<&TransferEvent> = store.token_events().filter(|e| e.involves(address)).collect();
    if events.is_empty() && !store.claims.contains_key(address) {
        return Err(FlowError::AddressNotFound(*address));
    }
    let ctx = ClassifyContext::new(store, config);
    Ok(replay(*address, &events, &ctx))
}

/// Flows for many addresses with a single pass over the event list.
/// Addresses with no token activity get an empty flow.
pub fn build_all_flows(
    store: &EventStore,
    addresses: &[Address],
    config: ClassifyConfig,
) -> BTreeMap<Address, FlowBuild> {
    let wanted: BTreeSet<Address> = addresses.iter().copied().collect();
    let mut by_addr: BTreeMap<Address, Vec<&TransferEvent>> = wanted.iter().map(|a| (*a, Vec::new())).collect();
    for e in store.token_events() {
        if let Some(v) = by_addr.get_mut(&e.from) {
            v.push(e);
        }
        if e.to != e.from {
            if let Some(v) = by_addr.get_mut(&e.to) {
                v.push(e);
            }
        }
    }
    let ctx = ClassifyContext::new(store, config);
    let built: Vec<(Address, FlowBuild)> = by_addr.par_iter().map(|(a, evs)| (*a, replay(*a, evs, &ctx))).collect();
    built.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ClaimRecord, EventKind, Tier};
    use crate::types::TxHash;

    fn addr(n: u8) -> Address {
        let mut b = [0u8; 20];
        b[19] = n;
        Address(b)
    }

    fn ev(n: u32, from: Address, to: Address, whole: u128, ts: i64) -> TransferEvent {
        let mut h = [0u8; 32];
        h[28..].copy_from_slice(&n.to_be_bytes());
        TransferEvent {
            tx_hash: TxHash(h),
            log_index: Some(0),
            from,
            to,
            value: TokenAmount::from_whole(whole, 18),
            timestamp: ts,
            block: n as u64,
            kind: EventKind::TokenTransfer,
        }
    }

    const AIRDROP: u8 = 200;
    const STAKING: u8 = 201;
    const DEX: u8 = 202;
    const UNI: u8 = 203;
    const POOL: u8 = 204;

    fn store(events: Vec<TransferEvent>) -> EventStore {
        let mut s = EventStore::default();
        for (n, name, category) in [
            (AIRDROP, "Airdrop Contract", ContractCategory::Airdrop),
            (STAKING, "Staking Pool 3", ContractCategory::Staking),
            (DEX, "Augustus Swapper", ContractCategory::TradingSwap),
            (UNI, "UniswapV3-PSP", ContractCategory::TradingOrLP),
            (POOL, "Balancer Pool", ContractCategory::LiquidityPool),
        ] {
            s.contracts.insert(addr(n), ContractInfo { address: addr(n), name: name.into(), category });
        }
        s.claims.insert(
            addr(1),
            ClaimRecord { address: addr(1), tier: Tier::T5200, amount: Tier::T5200.amount(18), claim_timestamp: 10 },
        );
        s.events = events;
        s
    }

    #[test]
    fn classification_table() {
        let s = store(vec![]);
        let ctx = ClassifyContext::new(&s, ClassifyConfig::default());
        let me = addr(1);
        let c = classify_event(&ev(1, me, addr(STAKING), 1, 0), &me, &ctx);
        assert_eq!(c.op, OperationKind::Stake);
        assert_eq!(classify_event(&ev(1, me, addr(9), 1, 0), &me, &ctx).op, OperationKind::Send);
        assert_eq!(classify_event(&ev(1, addr(9), me, 1, 0), &me, &ctx).op, OperationKind::Receive);
        assert_eq!(classify_event(&ev(1, addr(DEX), me, 1, 0), &me, &ctx).op, OperationKind::Buy);
        assert_eq!(classify_event(&ev(1, me, addr(POOL), 1, 0), &me, &ctx).op, OperationKind::LpAdd);
        let uni = classify_event(&ev(1, me, addr(UNI), 1, 0), &me, &ctx);
        assert_eq!(uni.op, OperationKind::Sell);
        assert!(matches!(uni.issue, Some(FlowIssue::AmbiguousTradingOrLp { .. })));
        let ctx_lp = ClassifyContext::new(&s, ClassifyConfig { trading_or_lp: TradingOrLpRule::Lp });
        assert_eq!(classify_event(&ev(1, me, addr(UNI), 1, 0), &me, &ctx_lp).op, OperationKind::LpAdd);
        let claim = classify_event(&ev(1, addr(AIRDROP), me, 1, 0), &me, &ctx);
        assert!(claim.is_claim);
        assert_eq!(claim.op, OperationKind::Receive);
    }

    #[test]
    fn undocumented_contract_falls_back_by_direction() {
        let mut s = store(vec![]);
        let mystery = addr(77);
        let mut internal = ev(9, mystery, addr(50), 0, 0);
        internal.kind = EventKind::InternalTx;
        s.events.push(internal);
        let ctx = ClassifyContext::new(&s, ClassifyConfig::default());
        let c = classify_event(&ev(1, addr(1), mystery, 1, 0), &addr(1), &ctx);
        assert_eq!(c.op, OperationKind::Send);
        assert!(matches!(c.issue, Some(FlowIssue::UnknownContract { address, .. }) if address == mystery));
    }

    #[test]
    fn claim_then_sell() {
        let me = addr(1);
        let s = store(vec![ev(1, addr(AIRDROP), me, 5200, 10), ev(2, me, addr(DEX), 5200, 20)]);
        let b = build_flow(&me, &s, ClassifyConfig::default()).unwrap();
        let ops: Vec<_> = b.flow.events.iter().map(|e| (e.op, e.balance_after)).collect();
        assert_eq!(
            ops,
            vec![(OperationKind::Receive, TokenAmount::from_whole(5200, 18)), (OperationKind::Sell, TokenAmount::ZERO)]
        );
        assert!(b.issues.is_empty());
    }

    #[test]
    fn stake_tracks_position() {
        let me = addr(1);
        let s = store(vec![ev(1, addr(AIRDROP), me, 7800, 10), ev(2, me, addr(STAKING), 7800, 20)]);
        let b = build_flow(&me, &s, ClassifyConfig::default()).unwrap();
        let (bal, staked, lp) = b.flow.final_positions();
        assert_eq!(bal, TokenAmount::ZERO);
        assert_eq!(staked, TokenAmount::from_whole(7800, 18));
        assert_eq!(lp, TokenAmount::ZERO);
    }

    #[test]
    fn overdraft_is_excluded_and_reported() {
        let me = addr(1);
        let s = store(vec![ev(1, me, addr(DEX), 10, 5), ev(2, addr(AIRDROP), me, 5200, 10)]);
        let b = build_flow(&me, &s, ClassifyConfig::default()).unwrap();
        assert_eq!(b.flow.events.len(), 1);
        assert!(matches!(b.issues[0], FlowIssue::NegativeBalance { timestamp: 5, .. }));
    }

    #[test]
    fn unknown_address() {
        let s = store(vec![]);
        assert_eq!(build_flow(&addr(99), &s, ClassifyConfig::default()), Err(FlowError::AddressNotFound(addr(99))));
    }

    #[test]
    fn batch_matches_single() {
        let me = addr(1);
        let other = addr(2);
        let s =
            store(vec![ev(1, addr(AIRDROP), me, 5200, 10), ev(2, me, other, 100, 20), ev(3, other, addr(DEX), 50, 30)]);
        let all = build_all_flows(&s, &[me, other], ClassifyConfig::default());
        assert_eq!(all[&me], build_flow(&me, &s, ClassifyConfig::default()).unwrap());
        assert_eq!(all[&other], build_flow(&other, &s, ClassifyConfig::default()).unwrap());
        assert_eq!(all[&other].flow.events.len(), 2);
    }
}
