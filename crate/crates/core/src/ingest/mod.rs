//! Parsing, validation and normalization of the input artifacts into an
//! immutable [`EventStore`].
//!
//! Inputs are token transfers and external transactions (CSV with header or
//! JSONL), a contract dictionary (`address,name,category`), the airdrop claim
//! list (`address,tier,amount,timestamp`) and optionally native balances
//! (`address,chain,balance`). Row-level problems never abort ingestion: they
//! are collected into a [`FileReport`] so that every input row is accounted
//! for as stored, malformed or deduplicated.

mod parse;
mod store;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Address, Timestamp, TokenAmount, TxHash};

pub use parse::{
    parse_balances, parse_claims, parse_contracts, parse_transfers, write_balances_csv, write_claims_csv,
    write_contracts_csv, write_transfers_csv,
};
pub use store::{
    build_event_store, ingest, EventStore, IngestReport, InputPaths, BALANCES_FILE, CLAIMS_FILE, CONTRACTS_FILE,
    EXTERNAL_FILE, INTERNAL_FILE, TOKEN_FILE,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing required column {column:?}")]
    MissingHeader { path: PathBuf, column: String },
    #[error("{path}: unreadable header: {message}")]
    BadHeader { path: PathBuf, message: String },
    #[error("duplicate claim for {0}")]
    DuplicateClaim(Address),
    #[error("write failed: {0}")]
    Write(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    TokenTransfer,
    ExternalTx,
    InternalTx,
}

/// One token or external transaction edge record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEvent {
    pub tx_hash: TxHash,
    /// Position of the transfer log inside its transaction, when known.
    pub log_index: Option<u32>,
    pub from: Address,
    pub to: Address,
    pub value: TokenAmount,
    pub timestamp: Timestamp,
    pub block: u64,
    pub kind: EventKind,
}

impl TransferEvent {
    pub(crate) fn sort_key(&self) -> (Timestamp, u64, TxHash, Option<u32>, EventKind, Address, Address, TokenAmount) {
        (self.timestamp, self.block, self.tx_hash, self.log_index, self.kind, self.from, self.to, self.value)
    }

    pub fn involves(&self, address: &Address) -> bool {
        self.from == *address || self.to == *address
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ContractCategory {
    Airdrop,
    TradingSwap,
    Staking,
    LiquidityPool,
    TradingOrLP,
    #[serde(rename = "CEX")]
    Cex,
    Other,
}

impl ContractCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            ContractCategory::Airdrop => "Airdrop",
            ContractCategory::TradingSwap => "TradingSwap",
            ContractCategory::Staking => "Staking",
            ContractCategory::LiquidityPool => "LiquidityPool",
            ContractCategory::TradingOrLP => "TradingOrLP",
            ContractCategory::Cex => "CEX",
            ContractCategory::Other => "Other",
        }
    }
}

impl fmt::Display for ContractCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContractCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Ok(match norm.as_str() {
            "airdrop" => ContractCategory::Airdrop,
            "tradingswap" | "swap" | "trading" => ContractCategory::TradingSwap,
            "staking" => ContractCategory::Staking,
            "liquiditypool" | "lp" => ContractCategory::LiquidityPool,
            "tradingorlp" => ContractCategory::TradingOrLP,
            "cex" => ContractCategory::Cex,
            "other" => ContractCategory::Other,
            _ => return Err(format!("unknown contract category {s:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractInfo {
    pub address: Address,
    pub name: String,
    pub category: ContractCategory,
}

/// Airdrop reward tier, named by its face value in whole tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    T5200,
    T7800,
    T10400,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::T5200, Tier::T7800, Tier::T10400];

    pub fn face_value(&self) -> u128 {
        match self {
            Tier::T5200 => 5_200,
            Tier::T7800 => 7_800,
            Tier::T10400 => 10_400,
        }
    }

    pub fn amount(&self, decimals: u32) -> TokenAmount {
        TokenAmount::from_whole(self.face_value(), decimals)
    }

    pub fn index(&self) -> usize {
        match self {
            Tier::T5200 => 0,
            Tier::T7800 => 1,
            Tier::T10400 => 2,
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.face_value())
    }
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits: String = s.chars().filter(|c| c.is_ascii_digit()).collect();
        match digits.as_str() {
            "5200" => Ok(Tier::T5200),
            "7800" => Ok(Tier::T7800),
            "10400" => Ok(Tier::T10400),
            _ => Err(format!("unknown tier {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub address: Address,
    pub tier: Tier,
    pub amount: TokenAmount,
    pub claim_timestamp: Timestamp,
}

/// Native-chain balance of an address at the eligibility snapshot, in wei-like units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceRecord {
    pub address: Address,
    pub chain: String,
    pub amount: u128,
}

/// Inclusive study window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl StudyWindow {
    pub fn contains(&self, ts: Timestamp) -> bool {
        ts >= self.start && ts <= self.end
    }
}

impl Default for StudyWindow {
    fn default() -> Self {
        // 2021-11-15 00:00:00 .. 2022-04-13 23:59:59 UTC
        StudyWindow { start: 1_636_934_400, end: 1_649_894_399 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub window: StudyWindow,
    pub token_decimals: u32,
    pub native_decimals: u32,
    pub allow_self_transfers: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            window: StudyWindow::default(),
            token_decimals: 18,
            native_decimals: 18,
            allow_self_transfers: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedRow {
    pub line: u64,
    pub reason: String,
}

/// Per-file accounting: `rows = accepted + malformed.len()`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileReport {
    pub path: String,
    pub rows: u64,
    pub accepted: u64,
    pub malformed: Vec<MalformedRow>,
}

#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub report: FileReport,
}
