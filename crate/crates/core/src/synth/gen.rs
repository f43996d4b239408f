use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Archetype, ChurnSpec, GroundTruth, Membership, PatternSpec, PlantKind, PlantedInstance, PlantedStats, ScenarioSpec,
    SynthContracts, SynthError, SynthOutput,
};
use crate::eligibility::EligibilityRules;
use crate::flows::OperationKind;
use crate::forensics::{detect_chain, p2p_components, DetectorConfig, MemberRole, PatternKind, PatternMember};
use crate::graphs::{slice_cutoffs, CommunityGraph, NodeClass};
use crate::ingest::{
    BalanceRecord, ClaimRecord, ContractCategory, ContractInfo, EventKind, StudyWindow, Tier, TransferEvent,
};
use crate::stats::Action;
use crate::types::{Address, Timestamp, TokenAmount, TxHash, SECONDS_PER_DAY};

const DAY: i64 = SECONDS_PER_DAY;
const HOUR: i64 = 3600;
const CLAIM_SPAN_DAYS: i64 = 14;
// block numbers are derived from time so the files look chain-like
const GENESIS_TS: i64 = 1_438_269_973;
const BLOCK_SECONDS: i64 = 13;
/// External transactions per planted eligibility history.
const HISTORY_TXS: usize = 55;
const NATIVE_BALANCE: u128 = 50_000_000_000_000_000;
const FUNDING_VALUE: u128 = 20_000_000_000_000_000;

fn bad<T>(msg: String) -> Result<T, SynthError> {
    Err(SynthError::InfeasibleSpec(msg))
}

fn size_range(p: &PatternSpec) -> (usize, usize) {
    let d = DetectorConfig::default();
    let clique_limit = EligibilityRules::default().max_clique.unwrap_or(d.blatant.max);
    match p.kind {
        PlantKind::Chain => (d.chain.min_len, 8),
        PlantKind::Sunflower | PlantKind::Relay | PlantKind::Staging => (d.sunflower.min_spokes, 40),
        PlantKind::Sponsorship => (d.sponsorship.min_beneficiaries, 60),
        // two-level tree whose nodes keep fewer spokes than a sunflower needs
        PlantKind::Cautious => (d.cautious.min_size, 1 + 4 + 16),
        PlantKind::Blatant => (d.blatant.min, d.blatant.max.min(clique_limit)),
        PlantKind::ExcludedClique => (d.blatant.max.max(clique_limit) + 1, 12),
    }
}

fn default_size(p: &PatternSpec, rng: &mut ChaCha8Rng, sponsors: usize) -> usize {
    let (lo, hi) = size_range(p);
    match p.kind {
        PlantKind::Chain => rng.gen_range(lo..=lo + 1),
        PlantKind::Sunflower | PlantKind::Relay | PlantKind::Staging => rng.gen_range(lo..=8),
        PlantKind::Sponsorship => rng.gen_range(lo..=(5 * sponsors).clamp(lo, hi)),
        PlantKind::Cautious => rng.gen_range(lo..=19),
        PlantKind::Blatant => hi,
        PlantKind::ExcludedClique => lo,
    }
}

pub(super) fn check_pattern(p: &PatternSpec) -> Result<(), SynthError> {
    let (lo, hi) = size_range(p);
    if let Some(s) = p.size {
        if s < lo || s > hi {
            return bad(format!("{:?} size {s} outside feasible range {lo}..={hi}", p.kind));
        }
    }
    if let Some(s) = p.sponsors {
        let min = DetectorConfig::default().sponsorship.min_sponsors.max(2);
        if p.kind != PlantKind::Sponsorship {
            return bad(format!("sponsor count given for {:?}", p.kind));
        }
        if !(min..=8).contains(&s) {
            return bad(format!("sponsor count {s} outside {min}..=8"));
        }
    }
    Ok(())
}

pub(super) fn check_churn(c: &ChurnSpec, window: &StudyWindow) -> Result<(), SynthError> {
    if c.interval_days == 0 || c.pairs_per_interval == 0 || c.holders < 2 {
        return bad("churn needs an interval, at least one pair per interval and two holders".into());
    }
    let cutoffs = slice_cutoffs(window.start, window.end, c.interval_days)
        .map_err(|e| SynthError::InfeasibleSpec(e.to_string()))?;
    if cutoffs.windows(2).any(|w| w[1] - w[0] < 2) {
        return bad("last churn interval is shorter than two seconds".into());
    }
    let needed = c.pairs_per_interval * (cutoffs.len() - 1);
    let available = c.holders * (c.holders - 1) / 2;
    if needed > available {
        return bad(format!("churn needs {needed} fresh pairs but {} holders give {available}", c.holders));
    }
    Ok(())
}

pub(super) struct Generator<'a> {
    spec: &'a ScenarioSpec,
    rng: ChaCha8Rng,
    used: BTreeSet<Address>,
    events: Vec<TransferEvent>,
    claims: BTreeMap<Address, ClaimRecord>,
    balances: Vec<BalanceRecord>,
    c: SynthContracts,
    contracts: Vec<ContractInfo>,
    wallet: BTreeMap<Address, u128>,
    staked: BTreeMap<Address, u128>,
    lp: BTreeMap<Address, u128>,
    bits: BTreeMap<Address, u8>,
    touched: BTreeMap<Address, BTreeSet<Address>>,
    ext_adj: BTreeMap<Address, BTreeSet<Address>>,
    archetype_of: BTreeMap<Address, Archetype>,
    instances: Vec<PlantedInstance>,
    churn_holders: Vec<Address>,
    noise_touched: BTreeSet<Address>,
    claim_span: i64,
    snapshot: Timestamp,
}

impl<'a> Generator<'a> {
    pub(super) fn new(spec: &'a ScenarioSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut used = BTreeSet::new();
        let mut fresh = || loop {
            let a = Address(rng.gen());
            if used.insert(a) {
                break a;
            }
        };
        let c = SynthContracts { airdrop: fresh(), dex: fresh(), staking: fresh(), pool: fresh() };
        let contracts = vec![
            ContractInfo {
                address: c.airdrop,
                name: "Airdrop Distributor".into(),
                category: ContractCategory::Airdrop,
            },
            ContractInfo { address: c.dex, name: "Swap Router".into(), category: ContractCategory::TradingSwap },
            ContractInfo { address: c.staking, name: "Staking Vault".into(), category: ContractCategory::Staking },
            ContractInfo { address: c.pool, name: "Liquidity Pool".into(), category: ContractCategory::LiquidityPool },
        ];
        let claim_span = match &spec.churn {
            Some(ch) => (ch.interval_days as i64 * DAY).min(CLAIM_SPAN_DAYS * DAY),
            None => CLAIM_SPAN_DAYS * DAY,
        };
        Generator {
            spec,
            rng,
            used,
            events: Vec::new(),
            claims: BTreeMap::new(),
            balances: Vec::new(),
            c,
            contracts,
            wallet: BTreeMap::new(),
            staked: BTreeMap::new(),
            lp: BTreeMap::new(),
            bits: BTreeMap::new(),
            touched: BTreeMap::new(),
            ext_adj: BTreeMap::new(),
            archetype_of: BTreeMap::new(),
            instances: Vec::new(),
            churn_holders: Vec::new(),
            noise_touched: BTreeSet::new(),
            claim_span,
            snapshot: spec.window.start - DAY,
        }
    }

    fn fresh(&mut self) -> Address {
        loop {
            let a = Address(self.rng.gen());
            if self.used.insert(a) {
                return a;
            }
        }
    }

    fn fresh_n(&mut self, n: usize) -> Vec<Address> {
        (0..n).map(|_| self.fresh()).collect()
    }

    fn whole(&self, n: u128) -> u128 {
        TokenAmount::from_whole(n, self.spec.token_decimals).0
    }

    fn push(&mut self, kind: EventKind, from: Address, to: Address, value: u128, ts: Timestamp) {
        self.events.push(TransferEvent {
            tx_hash: TxHash(self.rng.gen()),
            log_index: Some(0),
            from,
            to,
            value: TokenAmount(value),
            timestamp: ts,
            block: ((ts - GENESIS_TS).max(0) / BLOCK_SECONDS) as u64,
            kind,
        });
    }

    fn is_contract(&self, a: &Address) -> bool {
        [self.c.airdrop, self.c.dex, self.c.staking, self.c.pool].contains(a)
    }

    /// Token transfer with position and operation bookkeeping.
    fn token(&mut self, from: Address, to: Address, amount: u128, ts: Timestamp) {
        debug_assert!(ts >= self.spec.window.start && ts <= self.spec.window.end);
        self.push(EventKind::TokenTransfer, from, to, amount, ts);
        let claim = from == self.c.airdrop;
        if !self.is_contract(&from) {
            let w = self.wallet.entry(from).or_default();
            *w = w.checked_sub(amount).expect("generator overspent a wallet");
            let op = if to == self.c.staking {
                *self.staked.entry(from).or_default() += amount;
                OperationKind::Stake
            } else if to == self.c.pool {
                *self.lp.entry(from).or_default() += amount;
                OperationKind::LpAdd
            } else if to == self.c.dex {
                OperationKind::Sell
            } else {
                OperationKind::Send
            };
            if self.claims.contains_key(&from) {
                *self.bits.entry(from).or_default() |= op.bit();
            }
        }
        if !self.is_contract(&to) {
            *self.wallet.entry(to).or_default() += amount;
            let op = if from == self.c.dex { OperationKind::Buy } else { OperationKind::Receive };
            if self.claims.contains_key(&to) && !claim {
                *self.bits.entry(to).or_default() |= op.bit();
            }
        }
        for (x, y) in [(from, to), (to, from)] {
            if self.is_contract(&x) && self.claims.contains_key(&y) {
                self.touched.entry(x).or_default().insert(y);
            }
        }
    }

    fn external(&mut self, from: Address, to: Address, value: u128, ts: Timestamp) {
        self.push(EventKind::ExternalTx, from, to, value, ts);
        if !self.is_contract(&from) && !self.is_contract(&to) && from != to {
            self.ext_adj.entry(from).or_default().insert(to);
            self.ext_adj.entry(to).or_default().insert(from);
        }
    }

    fn claim_time(&mut self) -> Timestamp {
        self.spec.window.start + self.rng.gen_range(0..self.claim_span)
    }

    fn draw_tier(&mut self) -> Tier {
        let x: f64 = self.rng.gen();
        let mut acc = 0.0;
        for (t, r) in Tier::ALL.iter().zip(self.spec.tier_mix) {
            acc += r;
            if x < acc {
                return *t;
            }
        }
        *Tier::ALL.iter().rev().zip(self.spec.tier_mix.iter().rev()).find(|(_, r)| **r > 0.0).unwrap().0
    }

    fn claim(&mut self, a: Address, ts: Timestamp) {
        let tier = self.draw_tier();
        let amount = tier.amount(self.spec.token_decimals);
        self.claims.insert(a, ClaimRecord { address: a, tier, amount, claim_timestamp: ts });
        self.bits.insert(a, 0);
        self.token(self.c.airdrop, a, amount.0, ts);
    }

    /// Claims for every address; returns the latest claim time.
    fn claim_all(&mut self, addrs: &[Address]) -> Timestamp {
        let mut last = self.spec.window.start;
        for a in addrs {
            let t = self.claim_time();
            self.claim(*a, t);
            last = last.max(t);
        }
        last
    }

    fn step(&mut self, t: Timestamp) -> Timestamp {
        t + self.rng.gen_range(HOUR..=3 * DAY)
    }

    fn pre_window(&mut self) -> Timestamp {
        self.snapshot - self.rng.gen_range(DAY..150 * DAY)
    }

    fn send_all(&mut self, from: Address, to: Address, ts: Timestamp) {
        let amount = self.wallet.get(&from).copied().unwrap_or(0);
        self.token(from, to, amount, ts);
    }

    fn record(&mut self, plant: PlantKind, kinds: &[PatternKind], members: Vec<PatternMember>) {
        let id = self.instances.len();
        self.instances.push(PlantedInstance { id, plant, kinds: kinds.iter().copied().collect(), members });
    }

    pub(super) fn run(mut self) -> Result<SynthOutput, SynthError> {
        // one old transaction so external history covers the eligibility lookback
        let (x, y) = (self.fresh(), self.fresh());
        let anchor = self.spec.window.start - 200 * DAY;
        self.external(x, y, FUNDING_VALUE, anchor);
        self.noise_touched.extend([x, y]);

        let population: Vec<(Archetype, usize)> = self.spec.population.iter().map(|(a, n)| (*a, *n)).collect();
        for (arch, n) in population {
            for _ in 0..n {
                self.member(arch);
            }
        }
        for p in self.spec.patterns.clone() {
            for _ in 0..p.count {
                self.plant(&p);
            }
        }
        if let Some(c) = self.spec.churn.clone() {
            self.churn(&c);
        }
        let traders = self.traders();
        for i in 0..self.spec.noise.decoys {
            self.decoy(i % 6);
        }
        self.external_noise(&traders);
        Ok(self.finish())
    }

    fn member(&mut self, arch: Archetype) {
        use OperationKind::*;
        let a = self.fresh();
        let mut t = self.claim_time();
        self.claim(a, t);
        self.archetype_of.insert(a, arch);
        let ops = arch.ops();
        if ops.contains(&Buy) {
            t = self.step(t);
            let amount = self.rng.gen_range(100..=2_000);
            let amount = self.whole(amount);
            self.token(self.c.dex, a, amount, t);
        }
        let outs: Vec<OperationKind> = [Stake, LpAdd, Sell, Send].into_iter().filter(|k| ops.contains(k)).collect();
        let part = self.wallet[&a] / outs.len().max(1) as u128;
        for (i, op) in outs.iter().enumerate() {
            t = self.step(t);
            let amount = if i + 1 == outs.len() { self.wallet[&a] } else { part };
            let to = match op {
                Stake => self.c.staking,
                LpAdd => self.c.pool,
                Sell => self.c.dex,
                _ => self.fresh(),
            };
            self.token(a, to, amount, t);
        }
    }

    fn plant(&mut self, p: &PatternSpec) {
        let sponsors = match p.sponsors {
            Some(s) => s,
            None if p.kind == PlantKind::Sponsorship => self.rng.gen_range(2..=4),
            None => 0,
        };
        let size = match p.size {
            Some(s) => s,
            None => default_size(p, &mut self.rng, sponsors),
        };
        match p.kind {
            PlantKind::Chain => self.chain(size),
            PlantKind::Sunflower | PlantKind::Relay | PlantKind::Staging => self.sunflower(p.kind, size),
            PlantKind::Sponsorship => self.sponsorship(sponsors, size),
            PlantKind::Cautious => self.cautious(size),
            PlantKind::Blatant => self.blatant(size),
            PlantKind::ExcludedClique => self.excluded_clique(size),
        }
    }

    fn chain(&mut self, edges: usize) {
        let nodes = self.fresh_n(edges);
        let sink = self.fresh();
        let mut t = self.claim_all(&nodes);
        let path: Vec<Address> = nodes.iter().copied().chain([sink]).collect();
        for w in path.windows(2) {
            t = self.step(t);
            self.send_all(w[0], w[1], t);
        }
        let mut kinds = vec![PatternKind::Chain];
        if path.len() >= DetectorConfig::default().cautious.min_size {
            kinds.push(PatternKind::CautiousClique);
        }
        let last = path.len() - 1;
        let members = path
            .iter()
            .enumerate()
            .map(|(i, a)| PatternMember {
                address: *a,
                role: match i {
                    0 => MemberRole::Source,
                    i if i == last => MemberRole::Sink,
                    _ => MemberRole::Relay,
                },
            })
            .collect();
        self.record(PlantKind::Chain, &kinds, members);
    }

    fn sunflower(&mut self, plant: PlantKind, spokes: usize) {
        let leaves = self.fresh_n(spokes);
        let center = self.fresh();
        let mut claimants = leaves.clone();
        if plant != PlantKind::Staging {
            claimants.push(center);
        }
        let mut t = self.claim_all(&claimants);
        for s in &leaves {
            t = self.step(t);
            self.send_all(*s, center, t);
        }
        let mut members: Vec<PatternMember> =
            leaves.iter().map(|a| PatternMember { address: *a, role: MemberRole::Source }).collect();
        let kind = match plant {
            PlantKind::Sunflower => {
                members.push(PatternMember { address: center, role: MemberRole::Sink });
                PatternKind::Sunflower
            }
            _ => {
                let next = self.fresh();
                t = self.step(t);
                self.send_all(center, next, t);
                members.push(PatternMember { address: center, role: MemberRole::Relay });
                members.push(PatternMember { address: next, role: MemberRole::Sink });
                if plant == PlantKind::Relay {
                    PatternKind::SunflowerRelay
                } else {
                    PatternKind::StagingAggregation
                }
            }
        };
        let mut kinds = vec![kind];
        if members.len() >= DetectorConfig::default().cautious.min_size {
            kinds.push(PatternKind::CautiousClique);
        }
        self.record(plant, &kinds, members);
    }

    /// Every sponsor funds every beneficiary before the airdrop; each
    /// beneficiary pays two sponsors back so no member is a single-exit spoke.
    fn sponsorship(&mut self, s: usize, b: usize) {
        let sponsors = self.fresh_n(s);
        let bens = self.fresh_n(b);
        for sp in &sponsors {
            for be in &bens {
                let ts = self.pre_window();
                self.external(*sp, *be, FUNDING_VALUE, ts);
            }
        }
        let mut t = self.claim_all(&bens);
        let mut inflow = vec![0usize; s];
        for (j, be) in bens.iter().enumerate() {
            let (x, y) = (j % s, (j + 1) % s);
            let half = self.wallet[be] / 2;
            t = self.step(t);
            self.token(*be, sponsors[x], half, t);
            t = self.step(t);
            self.send_all(*be, sponsors[y], t);
            inflow[x] += 1;
            inflow[y] += 1;
        }
        let mut kinds = vec![PatternKind::SponsorshipClique];
        let n = s + b;
        let cfg = DetectorConfig::default().cautious;
        let density = (s * b) as f64 / (n * (n - 1) / 2) as f64;
        let reached = inflow.iter().max().copied().unwrap_or(0);
        if n >= cfg.min_size && 2 * reached >= n && density < cfg.max_density {
            kinds.push(PatternKind::CautiousClique);
        }
        let mut members: Vec<PatternMember> =
            sponsors.iter().map(|a| PatternMember { address: *a, role: MemberRole::Sponsor }).collect();
        members.extend(bens.iter().map(|a| PatternMember { address: *a, role: MemberRole::Source }));
        self.record(PlantKind::Sponsorship, &kinds, members);
    }

    /// Leaves feed mids, mids feed the root; returns (root, mids, leaves).
    fn tree(&mut self, n: usize, mids: usize) -> (Address, Vec<Address>, Vec<Address>) {
        let nodes = self.fresh_n(n);
        let mut t = self.claim_all(&nodes);
        let root = nodes[0];
        let mid: Vec<Address> = nodes[1..=mids].to_vec();
        let leaves: Vec<Address> = nodes[mids + 1..].to_vec();
        for (i, l) in leaves.iter().enumerate() {
            t = self.step(t);
            self.send_all(*l, mid[i % mids], t);
        }
        for m in &mid {
            t = self.step(t);
            self.send_all(*m, root, t);
        }
        (root, mid, leaves)
    }

    fn cautious(&mut self, n: usize) {
        let mids = (n - 1).div_ceil(5).max(2);
        let (root, mid, leaves) = self.tree(n, mids);
        // sparse pre-airdrop contact: disjoint pairs only
        let mut all: Vec<Address> =
            [root].into_iter().chain(mid.iter().copied()).chain(leaves.iter().copied()).collect();
        all.shuffle(&mut self.rng);
        for pair in all.chunks(2).take(n / 4) {
            let ts = self.pre_window();
            self.external(pair[0], pair[1], FUNDING_VALUE, ts);
        }
        let mut members = vec![PatternMember { address: root, role: MemberRole::Sink }];
        members
            .extend(mid.iter().chain(leaves.iter()).map(|a| PatternMember { address: *a, role: MemberRole::Source }));
        self.record(PlantKind::Cautious, &[PatternKind::CautiousClique], members);
    }

    fn clique_links(&mut self, nodes: &[Address]) {
        for i in 0..nodes.len() {
            for j in i + 1..nodes.len() {
                let ts = self.pre_window();
                let (a, b) = if self.rng.gen() { (nodes[i], nodes[j]) } else { (nodes[j], nodes[i]) };
                self.external(a, b, FUNDING_VALUE, ts);
            }
        }
    }

    /// Enough recent protocol activity and native balance to pass every
    /// default eligibility filter except the clique rule.
    fn eligibility_history(&mut self, a: Address) {
        for _ in 0..HISTORY_TXS {
            let ts = self.snapshot - self.rng.gen_range(DAY..170 * DAY);
            self.external(a, self.c.dex, 0, ts);
        }
        self.balances.push(BalanceRecord { address: a, chain: "eth".into(), amount: NATIVE_BALANCE });
    }

    fn blatant(&mut self, k: usize) {
        let nodes = self.fresh_n(k);
        self.clique_links(&nodes);
        for a in &nodes {
            self.eligibility_history(*a);
        }
        let mut t = self.claim_all(&nodes);
        let sink = nodes[0];
        for a in &nodes[1..] {
            t = self.step(t);
            self.send_all(*a, sink, t);
        }
        let members = nodes
            .iter()
            .map(|a| PatternMember {
                address: *a,
                role: if *a == sink { MemberRole::Sink } else { MemberRole::Source },
            })
            .collect();
        self.record(PlantKind::Blatant, &[PatternKind::BlatantClique], members);
    }

    fn excluded_clique(&mut self, k: usize) {
        let nodes = self.fresh_n(k);
        self.clique_links(&nodes);
        for a in &nodes {
            self.eligibility_history(*a);
        }
        let members = nodes.iter().map(|a| PatternMember { address: *a, role: MemberRole::Member }).collect();
        self.record(PlantKind::ExcludedClique, &[], members);
    }

    fn churn(&mut self, c: &ChurnSpec) {
        let holders = self.fresh_n(c.holders);
        self.claim_all(&holders);
        self.churn_holders = holders.clone();
        let mut pairs: Vec<(usize, usize)> =
            (0..holders.len()).flat_map(|i| (i + 1..holders.len()).map(move |j| (i, j))).collect();
        pairs.shuffle(&mut self.rng);
        let mut pairs = pairs.into_iter();
        let cutoffs =
            slice_cutoffs(self.spec.window.start, self.spec.window.end, c.interval_days).expect("validated window");
        let one = self.whole(1);
        for w in cutoffs.windows(2) {
            for _ in 0..c.pairs_per_interval {
                let (i, j) = pairs.next().expect("validated pair budget");
                let t1 = self.rng.gen_range(w[0] + 1..w[1]);
                let t2 = self.rng.gen_range(t1 + 1..=w[1]);
                self.token(holders[i], holders[j], one, t1);
                self.token(holders[j], holders[i], one, t2);
            }
        }
    }

    /// Small later-member trading groups, rejection-sampled so none forms a chain.
    fn traders(&mut self) -> Vec<Address> {
        let mut remaining = self.spec.noise.traders;
        let mut all = Vec::new();
        let start = self.spec.window.start;
        while remaining > 0 {
            let mut n = if remaining <= 5 { remaining } else { self.rng.gen_range(2..=5) };
            if remaining - n == 1 {
                n = if n == 5 { 4 } else { n + 1 };
            }
            remaining -= n;
            let nodes = self.fresh_n(n);
            let edges = self.trader_edges(&nodes);
            let mut t = start + self.rng.gen_range(0..20 * DAY);
            let budget = self.whole(1_000);
            for a in &nodes {
                t = self.step(t);
                self.token(self.c.dex, *a, budget, t);
            }
            for (u, v, w) in edges {
                t = self.step(t);
                self.token(u, v, w, t);
            }
            self.noise_touched.extend(nodes.iter().copied());
            all.extend(nodes);
        }
        all
    }

    fn trader_edges(&mut self, nodes: &[Address]) -> Vec<(Address, Address, u128)> {
        let n = nodes.len();
        let chain_cfg = DetectorConfig::default().chain;
        for _ in 0..200 {
            let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
            for i in 1..n {
                let p = self.rng.gen_range(0..i);
                edges.insert(if self.rng.gen() { (p, i) } else { (i, p) });
            }
            for u in 0..n {
                for v in 0..n {
                    if u != v && !edges.contains(&(u, v)) && self.rng.gen_bool(self.spec.noise.edge_rate) {
                        edges.insert((u, v));
                    }
                }
            }
            let mut out = Vec::new();
            for (u, v) in edges {
                let w = self.rng.gen_range(1..=100);
                out.push((nodes[u], nodes[v], self.whole(w)));
            }
            out.shuffle(&mut self.rng);
            let mut g = CommunityGraph::default();
            for (i, (u, v, w)) in out.iter().enumerate() {
                let e = TransferEvent {
                    tx_hash: TxHash([0; 32]),
                    log_index: Some(i as u32),
                    from: *u,
                    to: *v,
                    value: TokenAmount(*w),
                    timestamp: i as Timestamp,
                    block: 0,
                    kind: EventKind::TokenTransfer,
                };
                g.add_event(&e, |_| NodeClass::LaterMember);
            }
            let comps = p2p_components(&g, &BTreeSet::new());
            if comps.iter().all(|c| detect_chain(c, &chain_cfg).is_none()) {
                return out;
            }
        }
        vec![(nodes[0], nodes[1], self.whole(1))]
    }

    fn decoy(&mut self, variant: usize) {
        let before = self.used.clone();
        match variant {
            0 => {
                // four spokes, one short of a sunflower
                let spokes = self.fresh_n(4);
                let center = self.fresh();
                let mut claimants = spokes.clone();
                claimants.push(center);
                let mut t = self.claim_all(&claimants);
                for s in &spokes {
                    t = self.step(t);
                    self.send_all(*s, center, t);
                }
            }
            1 => {
                // two accumulating hops
                let nodes = self.fresh_n(2);
                let sink = self.fresh();
                let mut t = self.claim_all(&nodes);
                t = self.step(t);
                self.send_all(nodes[0], nodes[1], t);
                t = self.step(t);
                self.send_all(nodes[1], sink, t);
            }
            2 => {
                // aggregation tree one member short
                self.tree(5, 2);
            }
            3 => {
                // shared funders, too few beneficiaries
                let sponsors = self.fresh_n(2);
                let bens = self.fresh_n(4);
                for sp in &sponsors {
                    for be in &bens {
                        let ts = self.pre_window();
                        self.external(*sp, *be, FUNDING_VALUE, ts);
                    }
                }
                let mut t = self.claim_all(&bens);
                for be in &bens {
                    let half = self.wallet[be] / 2;
                    t = self.step(t);
                    self.token(*be, sponsors[0], half, t);
                    t = self.step(t);
                    self.send_all(*be, sponsors[1], t);
                }
            }
            4 => {
                // claimant clique routing to an outsider
                let nodes = self.fresh_n(4);
                let sink = self.fresh();
                self.clique_links(&nodes);
                let mut t = self.claim_all(&nodes);
                for a in &nodes {
                    t = self.step(t);
                    self.send_all(*a, sink, t);
                }
            }
            _ => {
                // aggregation tree with too much prior contact
                self.tree(6, 2);
                let ring: Vec<Address> = self.used.difference(&before).copied().collect();
                let mut ring = ring;
                ring.shuffle(&mut self.rng);
                for i in 0..ring.len() {
                    let ts = self.pre_window();
                    self.external(ring[i], ring[(i + 1) % ring.len()], FUNDING_VALUE, ts);
                }
            }
        }
        let added: Vec<Address> = self.used.difference(&before).copied().collect();
        self.noise_touched.extend(added);
    }

    /// Triangle-free external transactions among population members,
    /// traders and fresh outsiders.
    fn external_noise(&mut self, traders: &[Address]) {
        let want = self.spec.noise.external_edges;
        if want == 0 {
            return;
        }
        let mut pool: Vec<Address> = self.archetype_of.keys().copied().collect();
        pool.extend_from_slice(traders);
        let outsiders = self.fresh_n(want / 2 + 2);
        pool.extend(outsiders);
        let (lo, hi) = (self.spec.window.start - 180 * DAY, self.spec.window.end);
        let mut added = 0;
        let mut attempts = 0;
        while added < want && attempts < want * 50 {
            attempts += 1;
            let u = pool[self.rng.gen_range(0..pool.len())];
            let v = pool[self.rng.gen_range(0..pool.len())];
            if u == v {
                continue;
            }
            let nu = self.ext_adj.get(&u);
            let nv = self.ext_adj.get(&v);
            let linked = nu.is_some_and(|s| s.contains(&v));
            let closes_triangle = match (nu, nv) {
                (Some(a), Some(b)) => a.intersection(b).next().is_some(),
                _ => false,
            };
            if linked || closes_triangle {
                continue;
            }
            let ts = self.rng.gen_range(lo..=hi);
            self.external(u, v, FUNDING_VALUE, ts);
            self.noise_touched.extend([u, v]);
            added += 1;
        }
    }

    fn finish(self) -> SynthOutput {
        let mut stats = PlantedStats::default();
        for t in Tier::ALL {
            stats.claimants.insert(t, 0);
            stats.claimed.insert(t, TokenAmount::ZERO);
            stats.left.insert(t, 0);
            stats.actions.insert(t, Action::ALL.iter().map(|a| (*a, 0)).collect());
        }
        for c in self.claims.values() {
            *stats.claimants.get_mut(&c.tier).unwrap() += 1;
            *stats.claimed.get_mut(&c.tier).unwrap() += c.amount;
            stats.total_claimed += c.amount;
            let bits = self.bits[&c.address];
            let acts = stats.actions.get_mut(&c.tier).unwrap();
            for (a, ops) in [
                (Action::Sell, &[OperationKind::Sell][..]),
                (Action::Buy, &[OperationKind::Buy]),
                (Action::Stake, &[OperationKind::Stake]),
                (Action::Send, &[OperationKind::Send]),
                (Action::Receive, &[OperationKind::Receive]),
                (Action::Lp, &[OperationKind::LpAdd, OperationKind::LpRemove]),
            ] {
                if ops.iter().any(|k| bits & k.bit() != 0) {
                    *acts.get_mut(&a).unwrap() += 1;
                }
            }
            let get = |m: &BTreeMap<Address, u128>| m.get(&c.address).copied().unwrap_or(0);
            let held = get(&self.wallet) + get(&self.staked) + get(&self.lp);
            stats.held += TokenAmount(held);
            if held == 0 {
                *stats.left.get_mut(&c.tier).unwrap() += 1;
            }
        }
        stats.contract_members = self.touched.iter().map(|(c, m)| (*c, m.len() as u64)).collect();
        for (a, arch) in &self.archetype_of {
            stats.tiers_by_archetype.entry(*arch).or_insert([0; 3])[self.claims[a].tier.index()] += 1;
        }

        let mut pattern_membership: BTreeMap<Address, Vec<Membership>> = BTreeMap::new();
        for inst in &self.instances {
            for m in &inst.members {
                pattern_membership.entry(m.address).or_default().push(Membership {
                    plant: inst.plant,
                    instance: inst.id,
                    role: m.role,
                });
            }
        }
        let truth = GroundTruth {
            seed: self.spec.seed,
            contracts: self.c,
            role_of: self.archetype_of.iter().filter_map(|(a, r)| r.role().map(|l| (*a, l))).collect(),
            archetype_of: self.archetype_of,
            planted_bits: self.bits,
            instances: self.instances,
            pattern_membership,
            churn_holders: self.churn_holders,
            noise_touched: self.noise_touched,
            eligibility_snapshot: self.snapshot,
            planted_stats: stats,
        };
        SynthOutput {
            spec: self.spec.clone(),
            contracts: self.contracts,
            events: self.events,
            claims: self.claims.into_values().collect(),
            balances: self.balances,
            truth,
        }
    }
}
