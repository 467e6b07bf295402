//! Offline classification of flash-loan transactions by the platforms they
//! touch, plus a simple wash-trading cost model.

mod table;

#[cfg(test)]
mod tests;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use table::{aggregate, UsageAccumulator, UsageRow, UsageTable, OTHERS, TOTAL};

pub const UNKNOWN: &str = "Unknown";

const BUILTIN_MAP: &str = include_str!("../../scenarios/address_map.csv");

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("malformed address `{0}`")]
    MalformedAddress(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn read(path: &Path) -> Result<String, AnalyticsError> {
    std::fs::read_to_string(path).map_err(|source| AnalyticsError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Lowercases `0x`-prefixed 20-byte hex addresses and rejects anything else.
pub fn normalize_address(address: &str) -> Result<String, AnalyticsError> {
    let a = address.trim();
    let digits = a.strip_prefix("0x").or_else(|| a.strip_prefix("0X"));
    match digits {
        Some(d) if d.len() == 40 && d.bytes().all(|b| b.is_ascii_hexdigit()) => {
            Ok(format!("0x{}", d.to_ascii_lowercase()))
        }
        _ => Err(AnalyticsError::MalformedAddress(address.to_string())),
    }
}

/// Contract address to project name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AddressMap {
    entries: BTreeMap<String, String>,
}

impl AddressMap {
    /// `address,project` per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, AnalyticsError> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let bad = |message: String| AnalyticsError::Parse {
                line: k + 1,
                message,
            };
            let (address, project) = raw
                .split_once(',')
                .ok_or_else(|| bad("expected `address,project`".into()))?;
            let address = normalize_address(address).map_err(|e| bad(e.to_string()))?;
            let project = project.trim();
            if project.is_empty() {
                return Err(bad("empty project name".into()));
            }
            if entries
                .insert(address.clone(), project.to_string())
                .is_some()
            {
                return Err(bad(format!("duplicate address {address}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, AnalyticsError> {
        Self::parse(&read(path)?)
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_MAP).expect("bundled address map is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, address: &str) -> Result<Option<&str>, AnalyticsError> {
        Ok(self
            .entries
            .get(&normalize_address(address)?)
            .map(String::as_str))
    }
}

/// One exported flash-loan transaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoanRecord {
    pub tx: String,
    pub touched: Vec<String>,
    pub asset: String,
    pub amount: f64,
    pub gas: f64,
}

impl LoanRecord {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if !(self.amount.is_finite() && self.amount >= 0.0) {
            return Err(AnalyticsError::Invalid(format!(
                "{}: amount must be >= 0",
                self.tx
            )));
        }
        if !(self.gas.is_finite() && self.gas >= 0.0) {
            return Err(AnalyticsError::Invalid(format!(
                "{}: gas must be >= 0",
                self.tx
            )));
        }
        Ok(())
    }
}

/// A record that could not be used, with its 1-based line in the input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordError {
    pub line: usize,
    pub tx: Option<String>,
    pub message: String,
}

/// Reads JSON lines. Bad lines are returned as errors alongside the good records.
pub fn parse_records(text: &str) -> (Vec<(usize, LoanRecord)>, Vec<RecordError>) {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LoanRecord>(raw) {
            Ok(r) => match r.validate() {
                Ok(()) => records.push((k + 1, r)),
                Err(e) => errors.push(RecordError {
                    line: k + 1,
                    tx: Some(r.tx),
                    message: e.to_string(),
                }),
            },
            Err(e) => errors.push(RecordError {
                line: k + 1,
                tx: None,
                message: e.to_string(),
            }),
        }
    }
    (records, errors)
}

/// Sorted, deduplicated platforms touched by `record`.
pub fn classify(record: &LoanRecord, map: &AddressMap) -> Result<BTreeSet<String>, AnalyticsError> {
    record
        .touched
        .iter()
        .map(|a| Ok(map.lookup(a)?.unwrap_or(UNKNOWN).to_string()))
        .collect()
}

/// USD price per asset symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable {
    prices: BTreeMap<String, f64>,
}

impl Default for PriceTable {
    fn default() -> Self {
        let prices = [
            ("DAI", 1.0),
            ("ETH", 350.0),
            ("USDC", 1.0),
            ("BAT", 0.2),
            ("WBTC", 10_000.0),
            ("ZRX", 0.3),
            ("MKR", 500.0),
            ("LINK", 10.0),
            ("USDT", 1.0),
            ("REP", 15.0),
            ("KNC", 1.5),
            ("LEND", 0.5),
            ("sUSD", 1.0),
        ];
        Self {
            prices: prices
                .into_iter()
                .map(|(a, p)| (a.to_string(), p))
                .collect(),
        }
    }
}

impl PriceTable {
    pub fn new(prices: BTreeMap<String, f64>) -> Result<Self, AnalyticsError> {
        if let Some((a, p)) = prices.iter().find(|(_, p)| !(p.is_finite() && **p > 0.0)) {
            return Err(AnalyticsError::Invalid(format!(
                "price of {a} must be > 0, got {p}"
            )));
        }
        Ok(Self { prices })
    }

    /// A JSON object of symbol to price.
    pub fn from_json(text: &str) -> Result<Self, AnalyticsError> {
        let prices = serde_json::from_str(text).map_err(|e| AnalyticsError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::new(prices)
    }

    pub fn load(path: &Path) -> Result<Self, AnalyticsError> {
        Self::from_json(&read(path)?)
    }

    pub fn get(&self, asset: &str) -> Option<f64> {
        self.prices.get(asset).copied()
    }
}

/// Fees paid to push `target_volume_usd` through a DEX using flash-loaned
/// funds: the DEX fee on the whole volume, the loan fee on half of it and a
/// flat gas cost per transaction.
pub fn wash_trading_cost(
    target_volume_usd: f64,
    dex_fee: f64,
    loan_fee: f64,
    gas_cost_per_txn: f64,
    n_txns: u64,
) -> Result<f64, AnalyticsError> {
    for (name, fee) in [("dex fee", dex_fee), ("loan fee", loan_fee)] {
        if !(0.0..1.0).contains(&fee) {
            return Err(AnalyticsError::Invalid(format!(
                "{name} must lie in [0, 1), got {fee}"
            )));
        }
    }
    if !(target_volume_usd.is_finite() && target_volume_usd >= 0.0) {
        return Err(AnalyticsError::Invalid("target volume must be >= 0".into()));
    }
    if !(gas_cost_per_txn.is_finite() && gas_cost_per_txn >= 0.0) {
        return Err(AnalyticsError::Invalid("gas cost must be >= 0".into()));
    }
    Ok(target_volume_usd * dex_fee
        + target_volume_usd / 2.0 * loan_fee
        + n_txns as f64 * gas_cost_per_txn)
}
