use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{
    BalanceRecord, ClaimRecord, ContractCategory, ContractInfo, EventKind, FileReport, IngestConfig, IngestError,
    MalformedRow, Parsed, Tier, TransferEvent,
};
use crate::types::{parse_decimal_scaled, Address, TokenAmount, TxHash};

type Row = (u64, Result<Vec<Option<String>>, String>);

fn is_jsonl(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl") | Some("ndjson"))
}

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io { path: path.to_path_buf(), source }
}

/// Reads a table whose first `required` columns are mandatory.
fn read_table(path: &Path, columns: &[&str], required: usize) -> Result<Vec<Row>, IngestError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    if is_jsonl(path) {
        read_jsonl(path, file, columns, required)
    } else {
        read_csv(path, file, columns, required)
    }
}

fn read_csv(path: &Path, file: File, columns: &[&str], required: usize) -> Result<Vec<Row>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| IngestError::BadHeader { path: path.to_path_buf(), message: e.to_string() })?
        .clone();
    if headers.is_empty() {
        return Err(IngestError::MissingHeader { path: path.to_path_buf(), column: columns[0].to_string() });
    }
    let positions: Vec<Option<usize>> =
        columns.iter().map(|c| headers.iter().position(|h| h.eq_ignore_ascii_case(c))).collect();
    if let Some(missing) = (0..required).find(|&i| positions[i].is_none()) {
        return Err(IngestError::MissingHeader { path: path.to_path_buf(), column: columns[missing].to_string() });
    }
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line() + 1;
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map(|p| p.line()).unwrap_or(line);
                if record.len() != headers.len() {
                    rows.push((line, Err(format!("expected {} fields, found {}", headers.len(), record.len()))));
                    continue;
                }
                let fields = positions
                    .iter()
                    .map(|p| p.and_then(|i| record.get(i)).filter(|s| !s.is_empty()).map(str::to_string))
                    .collect();
                rows.push((line, Ok(fields)));
            }
            Err(e) => rows.push((line, Err(format!("unreadable row: {e}")))),
        }
    }
    Ok(rows)
}

fn read_jsonl(path: &Path, file: File, columns: &[&str], _required: usize) -> Result<Vec<Row>, IngestError> {
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx as u64 + 1;
        let value: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                rows.push((line_no, Err(format!("invalid JSON: {e}"))));
                continue;
            }
        };
        let Some(obj) = value.as_object() else {
            rows.push((line_no, Err("expected a JSON object".to_string())));
            continue;
        };
        let fields = columns
            .iter()
            .map(|c| {
                obj.get(*c).and_then(|v| match v {
                    serde_json::Value::Null => None,
                    serde_json::Value::String(s) => Some(s.trim().to_string()),
                    other => Some(other.to_string()),
                })
            })
            .collect();
        rows.push((line_no, Ok(fields)));
    }
    Ok(rows)
}

fn field<'a>(fields: &'a [Option<String>], idx: usize, name: &str) -> Result<&'a str, String> {
    fields[idx].as_deref().ok_or_else(|| format!("missing {name}"))
}

fn finish<T>(path: &Path, rows: usize, records: Vec<T>, malformed: Vec<MalformedRow>) -> Parsed<T> {
    Parsed {
        report: FileReport {
            path: path.display().to_string(),
            rows: rows as u64,
            accepted: records.len() as u64,
            malformed,
        },
        records,
    }
}

const TRANSFER_COLUMNS: [&str; 7] = ["tx_hash", "from", "to", "value", "timestamp", "block", "log_index"];

fn transfer_from_fields(f: &[Option<String>], kind: EventKind, cfg: &IngestConfig) -> Result<TransferEvent, String> {
    let tx_hash: TxHash = field(f, 0, "tx_hash")?.parse().map_err(|e| format!("tx_hash: {e}"))?;
    let from: Address = field(f, 1, "from")?.parse().map_err(|e| format!("from: {e}"))?;
    let to: Address = field(f, 2, "to")?.parse().map_err(|e| format!("to: {e}"))?;
    let value: TokenAmount = field(f, 3, "value")?.parse().map_err(|e| format!("value: {e}"))?;
    let timestamp: i64 = field(f, 4, "timestamp")?.parse().map_err(|e| format!("timestamp: {e}"))?;
    let block: u64 = field(f, 5, "block")?.parse().map_err(|e| format!("block: {e}"))?;
    let log_index = match f[6].as_deref() {
        Some(s) => Some(s.parse::<u32>().map_err(|e| format!("log_index: {e}"))?),
        None => None,
    };
    match kind {
        EventKind::TokenTransfer if !cfg.window.contains(timestamp) => {
            return Err(format!("timestamp {timestamp} outside study window"));
        }
        EventKind::ExternalTx | EventKind::InternalTx if timestamp > cfg.window.end => {
            return Err(format!("timestamp {timestamp} after study window"));
        }
        _ => {}
    }
    if from == to && !cfg.allow_self_transfers {
        return Err("self-transfer not allowed".to_string());
    }
    Ok(TransferEvent { tx_hash, log_index, from, to, value, timestamp, block, kind })
}

/// Parses a transfer export. The result is sorted; malformed rows are reported, not fatal.
pub fn parse_transfers(path: &Path, kind: EventKind, cfg: &IngestConfig) -> Result<Parsed<TransferEvent>, IngestError> {
    let rows = read_table(path, &TRANSFER_COLUMNS, 6)?;
    let total = rows.len();
    let mut records = Vec::with_capacity(total);
    let mut malformed = Vec::new();
    for (line, row) in rows {
        match row.and_then(|f| transfer_from_fields(&f, kind, cfg)) {
            Ok(ev) => records.push(ev),
            Err(reason) => malformed.push(MalformedRow { line, reason }),
        }
    }
    records.sort_by_key(|e| e.sort_key());
    Ok(finish(path, total, records, malformed))
}

pub fn parse_contracts(path: &Path) -> Result<Parsed<ContractInfo>, IngestError> {
    let rows = read_table(path, &["address", "name", "category"], 3)?;
    let total = rows.len();
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    for (line, row) in rows {
        let parsed = row.and_then(|f| {
            let address: Address = field(&f, 0, "address")?.parse().map_err(|e| format!("address: {e}"))?;
            let name = field(&f, 1, "name")?.to_string();
            let category: ContractCategory = field(&f, 2, "category")?.parse()?;
            if !seen.insert(address) {
                return Err(format!("duplicate contract entry for {address}"));
            }
            Ok(ContractInfo { address, name, category })
        });
        match parsed {
            Ok(c) => records.push(c),
            Err(reason) => malformed.push(MalformedRow { line, reason }),
        }
    }
    records.sort_by_key(|c| c.address);
    Ok(finish(path, total, records, malformed))
}

/// Claims are returned unsorted-by-duplicates; [`super::build_event_store`] rejects duplicate addresses.
pub fn parse_claims(path: &Path, cfg: &IngestConfig) -> Result<Parsed<ClaimRecord>, IngestError> {
    let rows = read_table(path, &["address", "tier", "amount", "timestamp"], 4)?;
    let total = rows.len();
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    for (line, row) in rows {
        let parsed = row.and_then(|f| {
            let address: Address = field(&f, 0, "address")?.parse().map_err(|e| format!("address: {e}"))?;
            let tier: Tier = field(&f, 1, "tier")?.parse()?;
            let amount: TokenAmount = field(&f, 2, "amount")?.parse().map_err(|e| format!("amount: {e}"))?;
            let claim_timestamp: i64 = field(&f, 3, "timestamp")?.parse().map_err(|e| format!("timestamp: {e}"))?;
            if amount != tier.amount(cfg.token_decimals) {
                return Err(format!("amount {amount} does not match tier {tier}"));
            }
            Ok(ClaimRecord { address, tier, amount, claim_timestamp })
        });
        match parsed {
            Ok(c) => records.push(c),
            Err(reason) => malformed.push(MalformedRow { line, reason }),
        }
    }
    records.sort_by_key(|c| (c.address, c.claim_timestamp));
    Ok(finish(path, total, records, malformed))
}

pub fn parse_balances(path: &Path, cfg: &IngestConfig) -> Result<Parsed<BalanceRecord>, IngestError> {
    let rows = read_table(path, &["address", "chain", "balance"], 3)?;
    let total = rows.len();
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    for (line, row) in rows {
        let parsed = row.and_then(|f| {
            let address: Address = field(&f, 0, "address")?.parse().map_err(|e| format!("address: {e}"))?;
            let chain = field(&f, 1, "chain")?.to_ascii_uppercase();
            let amount = parse_decimal_scaled(field(&f, 2, "balance")?, cfg.native_decimals)
                .map_err(|e| format!("balance: {e}"))?;
            Ok(BalanceRecord { address, chain, amount })
        });
        match parsed {
            Ok(b) => records.push(b),
            Err(reason) => malformed.push(MalformedRow { line, reason }),
        }
    }
    records.sort_by(|a, b| (a.address, &a.chain).cmp(&(b.address, &b.chain)));
    Ok(finish(path, total, records, malformed))
}

fn csv_err(e: impl std::fmt::Display) -> IngestError {
    IngestError::Write(e.to_string())
}

/// Canonical transfer CSV: fixed header and column order, lowercase hex, integer values.
pub fn write_transfers_csv<W: Write>(events: &[TransferEvent], out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tx_hash", "log_index", "from", "to", "value", "timestamp", "block"]).map_err(csv_err)?;
    for e in events {
        w.write_record([
            e.tx_hash.to_string(),
            e.log_index.map(|i| i.to_string()).unwrap_or_default(),
            e.from.to_string(),
            e.to.to_string(),
            e.value.to_string(),
            e.timestamp.to_string(),
            e.block.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn write_contracts_csv<W: Write>(contracts: &[ContractInfo], out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["address", "name", "category"]).map_err(csv_err)?;
    for c in contracts {
        w.write_record([c.address.to_string(), c.name.clone(), c.category.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn write_claims_csv<W: Write>(claims: &[ClaimRecord], out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["address", "tier", "amount", "timestamp"]).map_err(csv_err)?;
    for c in claims {
        w.write_record([
            c.address.to_string(),
            c.tier.to_string(),
            c.amount.to_string(),
            c.claim_timestamp.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn write_balances_csv<W: Write>(balances: &[BalanceRecord], decimals: u32, out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["address", "chain", "balance"]).map_err(csv_err)?;
    for b in balances {
        w.write_record([b.address.to_string(), b.chain.clone(), TokenAmount(b.amount).display_units(decimals)])
            .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "tx_hash,from,to,value,timestamp,block\n";

    fn hash(n: u8) -> String {
        format!("0x{}", format!("{n:02x}").repeat(32))
    }

    fn addr(n: u8) -> String {
        format!("0x{}", format!("{n:02X}").repeat(20))
    }

    fn write_tmp(name: &str, body: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        std::fs::File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn normalizes_valid_row() {
        let body = format!(
            "{HEADER}{},{},{},5200000000000000000000,1637000000,13600000\n",
            hash(0xab),
            addr(0xa1),
            addr(0xb2)
        );
        let (_d, path) = write_tmp("t.csv", &body);
        let parsed = parse_transfers(&path, EventKind::TokenTransfer, &IngestConfig::default()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        let ev = &parsed.records[0];
        assert_eq!(ev.value, TokenAmount::from_whole(5200, 18));
        assert_eq!(ev.from.to_string(), addr(0xa1).to_lowercase());
        assert_eq!(ev.to.to_string(), addr(0xb2).to_lowercase());
        assert_eq!(ev.log_index, None);
    }

    #[test]
    fn empty_file_with_header() {
        let (_d, path) = write_tmp("t.csv", HEADER);
        let parsed = parse_transfers(&path, EventKind::TokenTransfer, &IngestConfig::default()).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.report.rows, 0);
    }

    #[test]
    fn negative_value_is_reported() {
        let body = format!("{HEADER}{},{},{},-5,1637000000,13600000\n", hash(1), addr(1), addr(2));
        let (_d, path) = write_tmp("t.csv", &body);
        let parsed = parse_transfers(&path, EventKind::TokenTransfer, &IngestConfig::default()).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.report.malformed.len(), 1);
        assert_eq!(parsed.report.malformed[0].line, 2);
        assert!(parsed.report.malformed[0].reason.contains("negative"));
    }

    #[test]
    fn missing_header_is_fatal() {
        let (_d, path) = write_tmp("t.csv", "tx_hash,from,to,value\n");
        let err = parse_transfers(&path, EventKind::TokenTransfer, &IngestConfig::default()).unwrap_err();
        assert!(matches!(err, IngestError::MissingHeader { ref column, .. } if column == "timestamp"));
    }

    #[test]
    fn unreadable_file_is_fatal() {
        let err =
            parse_transfers(Path::new("/nonexistent/file.csv"), EventKind::TokenTransfer, &IngestConfig::default())
                .unwrap_err();
        assert!(matches!(err, IngestError::Io { .. }));
    }

    #[test]
    fn window_and_self_transfer_rules() {
        let body = format!(
            "{HEADER}{h},{a},{b},1,1500000000,1\n{h},{a},{a},1,1637000000,1\n",
            h = hash(3),
            a = addr(1),
            b = addr(2)
        );
        let (_d, path) = write_tmp("t.csv", &body);
        let parsed = parse_transfers(&path, EventKind::TokenTransfer, &IngestConfig::default()).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.report.malformed.len(), 2);
        // external history may precede the window
        let parsed = parse_transfers(&path, EventKind::ExternalTx, &IngestConfig::default()).unwrap();
        assert_eq!(parsed.records.len(), 1);
    }

    #[test]
    fn jsonl_alternative() {
        let body = format!(
            "{{\"tx_hash\":\"{}\",\"from\":\"{}\",\"to\":\"{}\",\"value\":\"7\",\"timestamp\":1637000000,\"block\":5,\"log_index\":2}}\n\nnot json\n",
            hash(9),
            addr(1),
            addr(2)
        );
        let (_d, path) = write_tmp("t.jsonl", &body);
        let parsed = parse_transfers(&path, EventKind::TokenTransfer, &IngestConfig::default()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.records[0].log_index, Some(2));
        assert_eq!(parsed.report.malformed.len(), 1);
        assert_eq!(parsed.report.malformed[0].line, 3);
    }

    #[test]
    fn claim_amount_must_match_tier() {
        let body = format!(
            "address,tier,amount,timestamp\n{},5200,5200000000000000000000,1637000000\n{},7800,1,1637000000\n",
            addr(1),
            addr(2)
        );
        let (_d, path) = write_tmp("c.csv", &body);
        let parsed = parse_claims(&path, &IngestConfig::default()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.records[0].tier, Tier::T5200);
        assert_eq!(parsed.report.malformed.len(), 1);
    }

    #[test]
    fn contract_categories_accept_display_labels() {
        assert_eq!("Trading: swap".parse::<ContractCategory>(), Ok(ContractCategory::TradingSwap));
        assert_eq!("Trading or LP".parse::<ContractCategory>(), Ok(ContractCategory::TradingOrLP));
        assert_eq!("cex".parse::<ContractCategory>(), Ok(ContractCategory::Cex));
        assert!("mixer".parse::<ContractCategory>().is_err());
    }
}
