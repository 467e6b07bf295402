use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use super::{classify, AddressMap, LoanRecord, PriceTable, RecordError, UNKNOWN};

pub const OTHERS: &str = "Others";
pub const TOTAL: &str = "Total";
const NO_PLATFORM: &str = "None";
const MIN_COUNT: u64 = 5;

/// Count, USD volume and streaming gas moments for one group of records.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Stats {
    count: u64,
    usd: f64,
    gas_mean: f64,
    gas_m2: f64,
    missing_price: u64,
}

impl Stats {
    fn push(&mut self, usd: Option<f64>, gas: f64) {
        self.count += 1;
        match usd {
            Some(v) => self.usd += v,
            None => self.missing_price += 1,
        }
        let delta = gas - self.gas_mean;
        self.gas_mean += delta / self.count as f64;
        self.gas_m2 += delta * (gas - self.gas_mean);
    }

    fn merge(&mut self, other: &Stats) {
        if other.count == 0 {
            return;
        }
        let n = self.count + other.count;
        let delta = other.gas_mean - self.gas_mean;
        let w = other.count as f64 / n as f64;
        self.gas_m2 += other.gas_m2 + delta * delta * self.count as f64 * w;
        self.gas_mean += delta * w;
        self.count = n;
        self.usd += other.usd;
        self.missing_price += other.missing_price;
    }

    fn row(&self, platforms: String) -> UsageRow {
        let std = if self.count == 0 {
            0.0
        } else {
            (self.gas_m2 / self.count as f64).max(0.0).sqrt()
        };
        UsageRow {
            platforms,
            count: self.count,
            amount_usd: self.usd,
            gas_mean: self.gas_mean,
            gas_std: std,
            missing_price: self.missing_price,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UsageRow {
    pub platforms: String,
    pub count: u64,
    /// Excludes records whose asset has no price.
    pub amount_usd: f64,
    pub gas_mean: f64,
    /// Population standard deviation.
    pub gas_std: f64,
    pub missing_price: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UsageTable {
    /// Platform sets seen at least five times, by descending count, then `Others`.
    pub rows: Vec<UsageRow>,
    pub total: UsageRow,
    pub errors: Vec<RecordError>,
}

/// Partial aggregate over a shard of records. Shards merge in any order.
#[derive(Debug, Clone, Default)]
pub struct UsageAccumulator {
    groups: BTreeMap<BTreeSet<String>, Stats>,
    errors: Vec<RecordError>,
}

impl UsageAccumulator {
    pub fn add(&mut self, line: usize, record: &LoanRecord, map: &AddressMap, prices: &PriceTable) {
        match classify(record, map) {
            Ok(set) => {
                let usd = prices.get(&record.asset).map(|p| record.amount * p);
                self.groups.entry(set).or_default().push(usd, record.gas);
            }
            Err(e) => self.errors.push(RecordError {
                line,
                tx: Some(record.tx.clone()),
                message: e.to_string(),
            }),
        }
    }

    pub fn merge(&mut self, other: UsageAccumulator) {
        for (set, stats) in other.groups {
            self.groups.entry(set).or_default().merge(&stats);
        }
        self.errors.extend(other.errors);
    }

    pub fn finish(mut self) -> UsageTable {
        let mut named = Vec::new();
        let mut others = Stats::default();
        let mut total = Stats::default();
        for (set, stats) in &self.groups {
            total.merge(stats);
            if stats.count < MIN_COUNT || set.contains(UNKNOWN) {
                others.merge(stats);
            } else {
                let label = if set.is_empty() {
                    NO_PLATFORM.to_string()
                } else {
                    set.iter()
                        .map(String::as_str)
                        .collect::<Vec<_>>()
                        .join(" + ")
                };
                named.push(stats.row(label));
            }
        }
        named.sort_by(|a, b| {
            b.count
                .cmp(&a.count)
                .then_with(|| a.platforms.cmp(&b.platforms))
        });
        if others.count > 0 {
            named.push(others.row(OTHERS.into()));
        }
        self.errors.sort_by_key(|e| e.line);
        UsageTable {
            rows: named,
            total: total.row(TOTAL.into()),
            errors: self.errors,
        }
    }
}

pub fn aggregate<'a>(
    records: impl IntoIterator<Item = (usize, &'a LoanRecord)>,
    map: &AddressMap,
    prices: &PriceTable,
) -> UsageTable {
    let mut acc = UsageAccumulator::default();
    for (line, r) in records {
        acc.add(line, r, map, prices);
    }
    acc.finish()
}

impl UsageTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn all_rows(&self) -> impl Iterator<Item = &UsageRow> {
        self.rows.iter().chain(std::iter::once(&self.total))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.all_rows() {
            w.serialize(row).expect("rows serialize");
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<[String; 5]> = self
            .all_rows()
            .map(|r| {
                let flag = if r.missing_price > 0 {
                    format!(" ({} unpriced)", r.missing_price)
                } else {
                    String::new()
                };
                [
                    r.platforms.clone(),
                    r.count.to_string(),
                    format!("{:.2}{flag}", r.amount_usd),
                    format!("{:.0}", r.gas_mean),
                    format!("{:.0}", r.gas_std),
                ]
            })
            .collect();
        let header = [
            "Platforms",
            "Transactions",
            "Amount (USD)",
            "Mean gas",
            "Gas std",
        ];
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let mut line = |row: &[&str]| {
            let _ = write!(out, "{:<w$}", row[0], w = widths[0]);
            for (c, w) in row[1..].iter().zip(&widths[1..]) {
                let _ = write!(out, "  {c:>w$}");
            }
            out.push('\n');
        };
        line(&header);
        for row in &cells {
            line(&row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }
}
