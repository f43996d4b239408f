use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    parse_balances, parse_claims, parse_contracts, parse_transfers, write_balances_csv, write_claims_csv,
    write_contracts_csv, write_transfers_csv, BalanceRecord, ClaimRecord, ContractCategory, ContractInfo, EventKind,
    FileReport, IngestConfig, IngestError, Parsed, TransferEvent,
};
use crate::types::{Address, Timestamp, TokenAmount, TxHash};

/// Locations of the raw input artifacts.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InputPaths {
    pub token_transfers: PathBuf,
    pub external_txs: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub internal_txs: Option<PathBuf>,
    pub contracts: PathBuf,
    pub claims: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balances: Option<PathBuf>,
}

/// Immutable, time-ordered store of every accepted event plus the
/// contract dictionary, claim list and native balances.
#[derive(Debug, Clone, Default)]
pub struct EventStore {
    pub events: Vec<TransferEvent>,
    pub contracts: BTreeMap<Address, ContractInfo>,
    pub claims: BTreeMap<Address, ClaimRecord>,
    /// address -> chain -> balance in native smallest units
    pub balances: BTreeMap<Address, BTreeMap<String, u128>>,
    pub config: IngestConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub files: Vec<FileReport>,
    pub input_rows: u64,
    pub malformed_rows: u64,
    pub duplicates_removed: u64,
    pub stored_events: u64,
    pub token_records: u64,
    pub external_records: u64,
    pub internal_records: u64,
    pub contracts: u64,
    pub claimed_addresses: u64,
    pub claims_without_events: Vec<Address>,
    pub balances: u64,
}

#[derive(PartialEq, Eq, Hash)]
struct DedupKey {
    kind: EventKind,
    tx_hash: TxHash,
    log_index: Option<u32>,
    // Only populated when the log index is unknown; then the whole row is the identity.
    body: Option<(Address, Address, TokenAmount)>,
}

fn dedup_key(e: &TransferEvent) -> DedupKey {
    DedupKey {
        kind: e.kind,
        tx_hash: e.tx_hash,
        log_index: e.log_index,
        body: e.log_index.is_none().then_some((e.from, e.to, e.value)),
    }
}

/// Merges parsed inputs into a sorted, deduplicated store.
pub fn build_event_store(
    transfers: Vec<Parsed<TransferEvent>>,
    contracts: Parsed<ContractInfo>,
    claims: Parsed<ClaimRecord>,
    balances: Option<Parsed<BalanceRecord>>,
    config: IngestConfig,
) -> Result<(EventStore, IngestReport), IngestError> {
    let mut report = IngestReport::default();

    let mut claim_map = BTreeMap::new();
    for c in claims.records {
        let address = c.address;
        if claim_map.insert(address, c).is_some() {
            return Err(IngestError::DuplicateClaim(address));
        }
    }

    let mut events = Vec::new();
    for parsed in transfers {
        report.input_rows += parsed.report.rows;
        report.malformed_rows += parsed.report.malformed.len() as u64;
        report.files.push(parsed.report);
        events.extend(parsed.records);
    }
    events.sort_by_key(|e| e.sort_key());
    let before = events.len();
    let mut seen = HashSet::with_capacity(events.len());
    events.retain(|e| seen.insert(dedup_key(e)));
    report.duplicates_removed = (before - events.len()) as u64;

    for e in &events {
        match e.kind {
            EventKind::TokenTransfer => report.token_records += 1,
            EventKind::ExternalTx => report.external_records += 1,
            EventKind::InternalTx => report.internal_records += 1,
        }
    }
    report.stored_events = events.len() as u64;

    let contract_map: BTreeMap<_, _> = contracts.records.into_iter().map(|c| (c.address, c)).collect();
    report.files.push(contracts.report);
    report.files.push(claims.report);

    let mut balance_map: BTreeMap<Address, BTreeMap<String, u128>> = BTreeMap::new();
    if let Some(b) = balances {
        for rec in b.records {
            balance_map.entry(rec.address).or_default().insert(rec.chain, rec.amount);
        }
        report.balances = balance_map.values().map(|m| m.len() as u64).sum();
        report.files.push(b.report);
    }

    let mut seen_addresses = BTreeSet::new();
    for e in &events {
        seen_addresses.insert(e.from);
        seen_addresses.insert(e.to);
    }
    report.claims_without_events = claim_map.keys().filter(|a| !seen_addresses.contains(*a)).copied().collect();
    report.contracts = contract_map.len() as u64;
    report.claimed_addresses = claim_map.len() as u64;

    log::info!(
        "ingested {} token / {} external / {} internal events, {} claims, {} contracts ({} malformed, {} duplicates)",
        report.token_records,
        report.external_records,
        report.internal_records,
        report.claimed_addresses,
        report.contracts,
        report.malformed_rows,
        report.duplicates_removed
    );

    Ok((EventStore { events, contracts: contract_map, claims: claim_map, balances: balance_map, config }, report))
}

/// Parses every input file (concurrently) and builds the store.
pub fn ingest(paths: &InputPaths, config: &IngestConfig) -> Result<(EventStore, IngestReport), IngestError> {
    let ((tokens, externals), (internals, (contracts, (claims, balances)))) = rayon::join(
        || {
            rayon::join(
                || parse_transfers(&paths.token_transfers, EventKind::TokenTransfer, config),
                || parse_transfers(&paths.external_txs, EventKind::ExternalTx, config),
            )
        },
        || {
            rayon::join(
                || paths.internal_txs.as_ref().map(|p| parse_transfers(p, EventKind::InternalTx, config)).transpose(),
                || {
                    rayon::join(
                        || parse_contracts(&paths.contracts),
                        || {
                            rayon::join(
                                || parse_claims(&paths.claims, config),
                                || paths.balances.as_ref().map(|p| parse_balances(p, config)).transpose(),
                            )
                        },
                    )
                },
            )
        },
    );
    let mut transfers = vec![tokens?, externals?];
    if let Some(i) = internals? {
        transfers.push(i);
    }
    build_event_store(transfers, contracts?, claims?, balances?, config.clone())
}

impl EventStore {
    pub fn token_events(&self) -> impl Iterator<Item = &TransferEvent> {
        self.events.iter().filter(|e| e.kind == EventKind::TokenTransfer)
    }

    pub fn external_events(&self) -> impl Iterator<Item = &TransferEvent> {
        self.events.iter().filter(|e| e.kind == EventKind::ExternalTx)
    }

    pub fn category(&self, address: &Address) -> Option<ContractCategory> {
        self.contracts.get(address).map(|c| c.category)
    }

    pub fn is_contract(&self, address: &Address) -> bool {
        self.contracts.contains_key(address)
    }

    pub fn is_cex(&self, address: &Address) -> bool {
        self.category(address) == Some(ContractCategory::Cex)
    }

    /// Addresses known to be contracts without being in the dictionary: the
    /// endpoints of internal (contract-initiated) transactions.
    pub fn undocumented_contracts(&self) -> BTreeSet<Address> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::InternalTx)
            .map(|e| e.from)
            .filter(|a| !self.contracts.contains_key(a))
            .collect()
    }

    /// Moment the airdrop opened: the earliest claim, or the window start without claims.
    pub fn airdrop_timestamp(&self) -> Timestamp {
        self.claims.values().map(|c| c.claim_timestamp).min().unwrap_or(self.config.window.start)
    }

    pub fn native_balance(&self, address: &Address, chain: &str) -> u128 {
        self.balances.get(address).and_then(|m| m.get(chain)).copied().unwrap_or(0)
    }

    /// Writes the canonical form of every input into `dir`.
    pub fn write_canonical(&self, dir: &Path) -> Result<(), IngestError> {
        fs::create_dir_all(dir).map_err(|e| IngestError::Write(e.to_string()))?;
        let create = |name: &str| {
            File::create(dir.join(name)).map(BufWriter::new).map_err(|e| IngestError::Write(format!("{name}: {e}")))
        };
        let by_kind =
            |k: EventKind| -> Vec<TransferEvent> { self.events.iter().filter(|e| e.kind == k).cloned().collect() };
        write_transfers_csv(&by_kind(EventKind::TokenTransfer), create(TOKEN_FILE)?)?;
        write_transfers_csv(&by_kind(EventKind::ExternalTx), create(EXTERNAL_FILE)?)?;
        write_transfers_csv(&by_kind(EventKind::InternalTx), create(INTERNAL_FILE)?)?;
        let contracts: Vec<_> = self.contracts.values().cloned().collect();
        write_contracts_csv(&contracts, create(CONTRACTS_FILE)?)?;
        let claims: Vec<_> = self.claims.values().cloned().collect();
        write_claims_csv(&claims, create(CLAIMS_FILE)?)?;
        let balances: Vec<_> = self
            .balances
            .iter()
            .flat_map(|(a, m)| {
                m.iter().map(|(chain, amount)| BalanceRecord { address: *a, chain: chain.clone(), amount: *amount })
            })
            .collect();
        write_balances_csv(&balances, self.config.native_decimals, create(BALANCES_FILE)?)?;
        Ok(())
    }

    /// Paths of a canonical directory written by [`EventStore::write_canonical`].
    pub fn canonical_paths(dir: &Path) -> InputPaths {
        InputPaths {
            token_transfers: dir.join(TOKEN_FILE),
            external_txs: dir.join(EXTERNAL_FILE),
            internal_txs: Some(dir.join(INTERNAL_FILE)),
            contracts: dir.join(CONTRACTS_FILE),
            claims: dir.join(CLAIMS_FILE),
            balances: Some(dir.join(BALANCES_FILE)),
        }
    }

    pub fn load_canonical(dir: &Path, config: &IngestConfig) -> Result<EventStore, IngestError> {
        ingest(&Self::canonical_paths(dir), config).map(|(s, _)| s)
    }
}

pub const TOKEN_FILE: &str = "token_transfers.csv";
pub const EXTERNAL_FILE: &str = "external_txs.csv";
pub const INTERNAL_FILE: &str = "internal_txs.csv";
pub const CONTRACTS_FILE: &str = "contracts.csv";
pub const CLAIMS_FILE: &str = "claims.csv";
pub const BALANCES_FILE: &str = "balances.csv";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{MalformedRow, Tier};

    fn a(n: u8) -> Address {
        Address([n; 20])
    }

    fn ev(hash: u8, from: u8, to: u8, ts: i64) -> TransferEvent {
        TransferEvent {
            tx_hash: TxHash([hash; 32]),
            log_index: Some(0),
            from: a(from),
            to: a(to),
            value: TokenAmount(10),
            timestamp: ts,
            block: ts as u64 / 10,
            kind: EventKind::TokenTransfer,
        }
    }

    fn parsed<T>(records: Vec<T>) -> Parsed<T> {
        Parsed {
            report: FileReport {
                path: "mem".into(),
                rows: records.len() as u64,
                accepted: records.len() as u64,
                malformed: vec![],
            },
            records,
        }
    }

    fn claim(n: u8) -> ClaimRecord {
        ClaimRecord { address: a(n), tier: Tier::T5200, amount: Tier::T5200.amount(18), claim_timestamp: 1_637_000_000 }
    }

    #[test]
    fn duplicate_claim_rejected() {
        let err =
            build_event_store(vec![], parsed(vec![]), parsed(vec![claim(1), claim(1)]), None, IngestConfig::default())
                .unwrap_err();
        assert!(matches!(err, IngestError::DuplicateClaim(x) if x == a(1)));
    }

    #[test]
    fn duplicate_rows_collapse_and_accounting_holds() {
        let mut p = parsed(vec![ev(1, 1, 2, 100), ev(1, 1, 2, 100), ev(2, 2, 3, 50)]);
        p.report.rows += 1;
        p.report.malformed.push(MalformedRow { line: 9, reason: "x".into() });
        let (store, report) =
            build_event_store(vec![p], parsed(vec![]), parsed(vec![claim(1), claim(7)]), None, IngestConfig::default())
                .unwrap();
        assert_eq!(store.events.len(), 2);
        assert_eq!(store.events[0].timestamp, 50);
        assert_eq!(report.duplicates_removed, 1);
        assert_eq!(report.input_rows, report.stored_events + report.malformed_rows + report.duplicates_removed);
        assert_eq!(report.claims_without_events, vec![a(7)]);
    }

    #[test]
    fn shuffled_input_yields_identical_store() {
        let evs = vec![ev(3, 1, 2, 70), ev(1, 2, 3, 70), ev(2, 3, 4, 10), ev(4, 4, 5, 70)];
        let mut rev = evs.clone();
        rev.reverse();
        let build = |v| {
            build_event_store(vec![parsed(v)], parsed(vec![]), parsed(vec![]), None, IngestConfig::default())
                .unwrap()
                .0
                .events
        };
        assert_eq!(build(evs), build(rev));
    }
}
