//! Synthetic communities with planted member behaviors, claim tiers and
//! hunter patterns, plus the ground truth needed to score every detector.
//!
//! All randomness comes from ChaCha8 seeded with [`ScenarioSpec::seed`], and
//! every collection is ordered, so one spec yields byte-identical files on
//! every platform.

mod gen;
mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{role_for_ops, RoleLabel};
use crate::flows::OperationKind;
use crate::forensics::{MemberRole, PatternKind, PatternMember};
use crate::ingest::{
    build_event_store, BalanceRecord, ClaimRecord, ContractInfo, EventKind, EventStore, FileReport, IngestConfig,
    IngestError, Parsed, StudyWindow, Tier, TransferEvent,
};
use crate::stats::Action;
use crate::types::{Address, Timestamp, TokenAmount};

pub use oracle::{oracle_compare, KindScore, OracleReport, RoleScore};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const SCENARIO_FILE: &str = "scenario.json";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible scenario: {0}")]
    InfeasibleSpec(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("write failed: {0}")]
    Io(String),
}

/// The fourteen member behavior templates, in reference cluster order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Archetype {
    Selling,
    Sending,
    Staking,
    StakingSelling,
    Holding,
    SellingSending,
    StakingSending,
    LpStaking,
    LpSelling,
    Lp,
    LpSending,
    BuyStakingSendingSelling,
    BuySendingSelling,
    BuyLpSendingSelling,
}

impl Archetype {
    pub const ALL: [Archetype; 14] = [
        Archetype::Selling,
        Archetype::Sending,
        Archetype::Staking,
        Archetype::StakingSelling,
        Archetype::Holding,
        Archetype::SellingSending,
        Archetype::StakingSending,
        Archetype::LpStaking,
        Archetype::LpSelling,
        Archetype::Lp,
        Archetype::LpSending,
        Archetype::BuyStakingSendingSelling,
        Archetype::BuySendingSelling,
        Archetype::BuyLpSendingSelling,
    ];

    pub fn ops(&self) -> &'static [OperationKind] {
        use OperationKind::*;
        match self {
            Archetype::Selling => &[Sell],
            Archetype::Sending => &[Send],
            Archetype::Staking => &[Stake],
            Archetype::StakingSelling => &[Stake, Sell],
            Archetype::Holding => &[],
            Archetype::SellingSending => &[Sell, Send],
            Archetype::StakingSending => &[Stake, Send],
            Archetype::LpStaking => &[LpAdd, Stake],
            Archetype::LpSelling => &[LpAdd, Sell],
            Archetype::Lp => &[LpAdd],
            Archetype::LpSending => &[LpAdd, Send],
            Archetype::BuyStakingSendingSelling => &[Buy, Stake, Sell, Send],
            Archetype::BuySendingSelling => &[Buy, Sell, Send],
            Archetype::BuyLpSendingSelling => &[Buy, LpAdd, Sell, Send],
        }
    }

    pub fn bits(&self) -> u8 {
        self.ops().iter().fold(0, |b, k| b | k.bit())
    }

    /// 1-based position in the reference cluster table.
    pub fn cluster_number(&self) -> usize {
        Self::ALL.iter().position(|a| a == self).unwrap() + 1
    }

    /// Reference population share in hundredths of a percent.
    pub fn reference_bp(&self) -> u32 {
        [3879, 2224, 1494, 850, 487, 239, 171, 39, 30, 11, 9, 358, 191, 18][self.cluster_number() - 1]
    }

    pub fn role(&self) -> Option<RoleLabel> {
        role_for_ops(self.bits())
    }
}

/// What the generator plants. Detector kinds implied by each plant are
/// listed per instance in [`PlantedInstance::kinds`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PlantKind {
    Chain,
    Sunflower,
    Relay,
    Staging,
    Sponsorship,
    Cautious,
    Blatant,
    /// Non-claimant external clique one larger than the eligibility limit.
    ExcludedClique,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub kind: PlantKind,
    pub count: usize,
    /// Chain edges, spokes, beneficiaries, tree members or clique size.
    /// Drawn from the default range when absent.
    #[serde(default)]
    pub size: Option<usize>,
    /// Sponsor count for sponsorship plants.
    #[serde(default)]
    pub sponsors: Option<usize>,
}

impl PatternSpec {
    pub fn new(kind: PlantKind, count: usize) -> Self {
        PatternSpec { kind, count, size: None, sponsors: None }
    }

    pub fn sized(kind: PlantKind, count: usize, size: usize) -> Self {
        PatternSpec { kind, count, size: Some(size), sponsors: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Later members trading among themselves in components of 2 to 5.
    pub traders: usize,
    /// Chance of each extra ordered pair edge inside a trader component.
    pub edge_rate: f64,
    /// Near-miss structures that fall just short of a detector rule.
    pub decoys: usize,
    /// Triangle-free external transactions among distractors.
    pub external_edges: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { traders: 0, edge_rate: 0.2, decoys: 0, external_edges: 0 }
    }
}

/// Holders claim in the first slice, then swap tokens in new reciprocal pairs
/// every later slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChurnSpec {
    pub holders: usize,
    pub pairs_per_interval: usize,
    pub interval_days: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub population: BTreeMap<Archetype, usize>,
    /// Tier probabilities for 5,200 / 7,800 / 10,400 token claims.
    pub tier_mix: [f64; 3],
    pub patterns: Vec<PatternSpec>,
    pub noise: NoiseSpec,
    pub churn: Option<ChurnSpec>,
    pub window: StudyWindow,
    pub token_decimals: u32,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            seed: 0,
            population: BTreeMap::new(),
            tier_mix: [0.3, 0.5, 0.2],
            patterns: Vec::new(),
            noise: NoiseSpec::default(),
            churn: None,
            window: StudyWindow::default(),
            token_decimals: 18,
        }
    }
}

pub(crate) const MIN_WINDOW_DAYS: i64 = 60;

impl ScenarioSpec {
    pub fn with_population(seed: u64, population: impl IntoIterator<Item = (Archetype, usize)>) -> Self {
        ScenarioSpec { seed, population: population.into_iter().collect(), ..Default::default() }
    }

    /// Every archetype in reference proportion, apportioned by largest remainder.
    pub fn reference_mix(seed: u64, total: usize) -> Self {
        let exact: Vec<(usize, u64)> = Archetype::ALL
            .iter()
            .map(|a| {
                let num = total as u64 * a.reference_bp() as u64;
                ((num / 10_000) as usize, num % 10_000)
            })
            .collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.0).collect();
        let short = total - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|a, b| exact[*b].1.cmp(&exact[*a].1).then(a.cmp(b)));
        for i in order.into_iter().take(short) {
            counts[i] += 1;
        }
        Self::with_population(seed, Archetype::ALL.into_iter().zip(counts))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InfeasibleSpec(m));
        if self.tier_mix.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return bad(format!("tier ratios must be non-negative, got {:?}", self.tier_mix));
        }
        if (self.tier_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("tier ratios must sum to 1, got {:?}", self.tier_mix));
        }
        if self.window.end - self.window.start < MIN_WINDOW_DAYS * crate::types::SECONDS_PER_DAY {
            return bad(format!("window must span at least {MIN_WINDOW_DAYS} days"));
        }
        if !(0.0..=1.0).contains(&self.noise.edge_rate) {
            return bad(format!("edge rate {} outside [0, 1]", self.noise.edge_rate));
        }
        for p in &self.patterns {
            gen::check_pattern(p)?;
        }
        if let Some(c) = &self.churn {
            gen::check_churn(c, &self.window)?;
        }
        Ok(())
    }
}

/// One planted structure and the detector kinds it satisfies by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedInstance {
    pub id: usize,
    pub plant: PlantKind,
    pub kinds: BTreeSet<PatternKind>,
    pub members: Vec<PatternMember>,
}

impl PlantedInstance {
    pub fn addresses(&self) -> BTreeSet<Address> {
        self.members.iter().map(|m| m.address).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub plant: PlantKind,
    pub instance: usize,
    pub role: MemberRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthContracts {
    pub airdrop: Address,
    pub dex: Address,
    pub staking: Address,
    pub pool: Address,
}

/// Table values tallied while generating, independent of the analysis code.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantedStats {
    pub claimants: BTreeMap<Tier, u64>,
    pub claimed: BTreeMap<Tier, TokenAmount>,
    pub total_claimed: TokenAmount,
    /// Claimants per tier that performed each action at least once after claiming.
    pub actions: BTreeMap<Tier, BTreeMap<Action, u64>>,
    /// Claimants per tier holding nothing (wallet, staked, LP) at window end.
    pub left: BTreeMap<Tier, u64>,
    pub held: TokenAmount,
    /// Distinct claimants with a token transfer to or from each contract.
    pub contract_members: BTreeMap<Address, u64>,
    pub tiers_by_archetype: BTreeMap<Archetype, [u64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub contracts: SynthContracts,
    pub archetype_of: BTreeMap<Address, Archetype>,
    pub role_of: BTreeMap<Address, RoleLabel>,
    /// Operation bits every claimant's flow must reproduce.
    pub planted_bits: BTreeMap<Address, u8>,
    pub instances: Vec<PlantedInstance>,
    pub pattern_membership: BTreeMap<Address, Vec<Membership>>,
    pub churn_holders: Vec<Address>,
    pub noise_touched: BTreeSet<Address>,
    /// Snapshot at which planted eligibility histories are complete.
    pub eligibility_snapshot: Timestamp,
    pub planted_stats: PlantedStats,
}

impl GroundTruth {
    pub fn instances_of(&self, kind: PatternKind) -> impl Iterator<Item = &PlantedInstance> {
        self.instances.iter().filter(move |i| i.kinds.contains(&kind))
    }

    pub fn planted(&self, plant: PlantKind) -> impl Iterator<Item = &PlantedInstance> {
        self.instances.iter().filter(move |i| i.plant == plant)
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub spec: ScenarioSpec,
    pub contracts: Vec<ContractInfo>,
    pub events: Vec<TransferEvent>,
    pub claims: Vec<ClaimRecord>,
    pub balances: Vec<BalanceRecord>,
    pub truth: GroundTruth,
}

fn parsed<T>(records: Vec<T>, path: &str) -> Parsed<T> {
    let n = records.len() as u64;
    Parsed { records, report: FileReport { path: path.into(), rows: n, accepted: n, malformed: Vec::new() } }
}

impl SynthOutput {
    pub fn ingest_config(&self) -> IngestConfig {
        IngestConfig { window: self.spec.window, token_decimals: self.spec.token_decimals, ..Default::default() }
    }

    pub fn to_store(&self) -> Result<EventStore, SynthError> {
        let by_kind =
            |k: EventKind| -> Vec<TransferEvent> { self.events.iter().filter(|e| e.kind == k).cloned().collect() };
        let (store, _) = build_event_store(
            vec![
                parsed(by_kind(EventKind::TokenTransfer), "synth:token"),
                parsed(by_kind(EventKind::ExternalTx), "synth:external"),
            ],
            parsed(self.contracts.clone(), "synth:contracts"),
            parsed(self.claims.clone(), "synth:claims"),
            Some(parsed(self.balances.clone(), "synth:balances")),
            self.ingest_config(),
        )?;
        Ok(store)
    }

    /// Canonical input files plus `ground_truth.json` and `scenario.json`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(), SynthError> {
        self.to_store()?.write_canonical(dir)?;
        write_json(dir, GROUND_TRUTH_FILE, &self.truth)?;
        write_json(dir, SCENARIO_FILE, &self.spec)?;
        Ok(())
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), SynthError> {
    let err = |e: String| SynthError::Io(format!("{name}: {e}"));
    let mut out = BufWriter::new(File::create(dir.join(name)).map_err(|e| err(e.to_string()))?);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| err(e.to_string()))?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(|e| err(e.to_string()))
}

pub fn read_ground_truth(dir: &Path) -> Result<GroundTruth, SynthError> {
    let text = fs::read_to_string(dir.join(GROUND_TRUTH_FILE)).map_err(|e| SynthError::Io(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| SynthError::Io(e.to_string()))
}

/// Generate the scenario. Deterministic in `spec`.
pub fn generate(spec: &ScenarioSpec) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    gen::Generator::new(spec).run()
}

#[cfg(test)]
mod tests;
