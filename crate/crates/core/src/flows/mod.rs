//! Per-address transaction flows, operation classification and the binary
//! operation-presence features used for behavioral clustering.

mod classify;
mod features;

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Address, Timestamp, TokenAmount, TxHash};

pub use classify::{
    build_all_flows, build_flow, classify_event, Classification, ClassifyConfig, ClassifyContext, FlowBuild,
    TradingOrLpRule,
};
pub use features::{extract_features, weighted_cosine_distance, FeatureVector, Weights};

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error("address {0} does not appear in the store")]
    AddressNotFound(Address),
    #[error("feature vectors carry different weights")]
    WeightMismatch,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("feature matrix: {0}")]
    Io(String),
}

/// The eight operation kinds: four interaction categories split by direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OperationKind {
    Buy,
    Sell,
    LpAdd,
    LpRemove,
    Stake,
    Unstake,
    Send,
    Receive,
}

impl OperationKind {
    pub const ALL: [OperationKind; 8] = [
        OperationKind::Buy,
        OperationKind::Sell,
        OperationKind::LpAdd,
        OperationKind::LpRemove,
        OperationKind::Stake,
        OperationKind::Unstake,
        OperationKind::Send,
        OperationKind::Receive,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn bit(self) -> u8 {
        1 << self.index()
    }

    pub fn name(self) -> &'static str {
        match self {
            OperationKind::Buy => "buy",
            OperationKind::Sell => "sell",
            OperationKind::LpAdd => "lp_add",
            OperationKind::LpRemove => "lp_remove",
            OperationKind::Stake => "stake",
            OperationKind::Unstake => "unstake",
            OperationKind::Send => "send",
            OperationKind::Receive => "receive",
        }
    }

    /// True when the operation moves tokens into the subject's wallet.
    pub fn is_inflow(self) -> bool {
        matches!(self, OperationKind::Buy | OperationKind::LpRemove | OperationKind::Unstake | OperationKind::Receive)
    }
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowEvent {
    pub op: OperationKind,
    pub counterparty: Address,
    pub amount: TokenAmount,
    /// Wallet balance after the event.
    pub balance_after: TokenAmount,
    pub staked_after: TokenAmount,
    pub lp_after: TokenAmount,
    pub timestamp: Timestamp,
    pub tx_hash: TxHash,
    /// The airdrop payout itself.
    pub is_claim: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionFlow {
    pub address: Address,
    pub events: Vec<FlowEvent>,
}

impl TransactionFlow {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Wallet, staked and LP positions after the last event.
    pub fn final_positions(&self) -> (TokenAmount, TokenAmount, TokenAmount) {
        self.events.last().map(|e| (e.balance_after, e.staked_after, e.lp_after)).unwrap_or_default()
    }

    pub fn contains(&self, op: OperationKind) -> bool {
        self.events.iter().any(|e| e.op == op && !e.is_claim)
    }
}

/// Problems found while classifying or replaying a flow; reported, never fatal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum FlowIssue {
    UnknownContract { address: Address, tx_hash: TxHash },
    AmbiguousTradingOrLp { address: Address, tx_hash: TxHash },
    NegativeBalance { timestamp: Timestamp, tx_hash: TxHash },
}

/// CSV with one row per address and one 0/1 column per operation kind.
pub fn write_feature_matrix_csv<W: Write>(rows: &[(Address, FeatureVector)], out: W) -> Result<(), FlowError> {
    let io = |e: csv::Error| FlowError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["address".to_string()];
    header.extend(OperationKind::ALL.iter().map(|k| k.name().to_string()));
    w.write_record(&header).map_err(io)?;
    for (addr, fv) in rows {
        let mut rec = vec![addr.to_string()];
        rec.extend(OperationKind::ALL.iter().map(|k| if fv.has(*k) { "1" } else { "0" }.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| FlowError::Io(e.to_string()))
}
