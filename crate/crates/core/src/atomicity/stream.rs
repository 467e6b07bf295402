use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::{AtomicityError, TwoExchangeMarket};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Sells `X` for `Y`.
    XY,
    YX,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::XY => "XY",
            Direction::YX => "YX",
        })
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "XY" => Ok(Direction::XY),
            "YX" => Ok(Direction::YX),
            other => Err(format!("direction must be XY or YX, got `{other}`")),
        }
    }
}

/// One intermediary trade. Events on exchanges outside the market have
/// `exchange = None` and leave both pools untouched.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeEvent {
    pub block: u64,
    pub exchange_id: String,
    pub exchange: Option<Side>,
    pub direction: Direction,
    pub amount: f64,
}

impl TradeEvent {
    pub fn new(block: u64, side: Side, direction: Direction, amount: f64) -> Self {
        let exchange_id = match side {
            Side::A => "A",
            Side::B => "B",
        };
        Self {
            block,
            exchange_id: exchange_id.into(),
            exchange: Some(side),
            direction,
            amount,
        }
    }
}

/// Log-normal trade sizes around fixed medians, on a uniformly chosen
/// exchange and direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub median_x: f64,
    pub median_y: f64,
    pub sigma: f64,
}

impl SyntheticSpec {
    /// Medians at `fraction` of the mean reserves of the two pools.
    pub fn for_market(market: &TwoExchangeMarket, fraction: f64, sigma: f64) -> Self {
        let (a, b) = (&market.exchange_a, &market.exchange_b);
        Self {
            median_x: fraction * 0.5 * (a.reserve_x + b.reserve_x),
            median_y: fraction * 0.5 * (a.reserve_y + b.reserve_y),
            sigma,
        }
    }

    pub fn validate(&self) -> Result<(), AtomicityError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.median_x)
            || !ok(self.median_y)
            || !(self.sigma.is_finite() && self.sigma >= 0.0)
        {
            return Err(AtomicityError::Invalid(
                "synthetic medians must be > 0 and sigma >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TradeStream {
    pub events: Vec<TradeEvent>,
}

impl TradeStream {
    pub fn synthetic<R: Rng>(
        spec: &SyntheticSpec,
        len: usize,
        rng: &mut R,
    ) -> Result<Self, AtomicityError> {
        spec.validate()?;
        let size = LogNormal::new(0.0, spec.sigma).expect("sigma validated");
        let events = (0..len)
            .map(|k| {
                let side = if rng.random::<bool>() {
                    Side::A
                } else {
                    Side::B
                };
                let (direction, median) = if rng.random::<bool>() {
                    (Direction::XY, spec.median_x)
                } else {
                    (Direction::YX, spec.median_y)
                };
                TradeEvent::new(k as u64, side, direction, median * size.sample(rng))
            })
            .collect();
        Ok(Self { events })
    }

    /// Parses `block_index, exchange_id, direction, amount` lines. Blank lines
    /// and lines starting with `#` are skipped. Exchange ids `A` and `B` map to
    /// the market's pools; any other id is kept as a no-op event.
    pub fn parse(text: &str) -> Result<Self, AtomicityError> {
        let mut events = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let line = k as u64 + 1;
            let bad = |message: String| AtomicityError::Trace { line, message };
            let record: Vec<&str> = raw.split(',').map(str::trim).collect();
            if record.len() != 4 {
                return Err(bad(format!("expected 4 fields, got {}", record.len())));
            }
            let block = record[0]
                .parse::<u64>()
                .map_err(|e| bad(format!("block index: {e}")))?;
            let exchange_id = record[1].to_string();
            let exchange = match record[1] {
                "A" => Some(Side::A),
                "B" => Some(Side::B),
                _ => None,
            };
            let direction = record[2].parse::<Direction>().map_err(bad)?;
            let amount = record[3]
                .parse::<f64>()
                .map_err(|e| bad(format!("amount: {e}")))?;
            if !(amount.is_finite() && amount > 0.0) {
                return Err(bad(format!("amount must be > 0, got {amount}")));
            }
            if events.last().is_some_and(|e: &TradeEvent| e.block > block) {
                return Err(bad("block indices must be non-decreasing".into()));
            }
            events.push(TradeEvent {
                block,
                exchange_id,
                exchange,
                direction,
                amount,
            });
        }
        Ok(Self { events })
    }

    pub fn load(path: &Path) -> Result<Self, AtomicityError> {
        let text = std::fs::read_to_string(path).map_err(|source| AtomicityError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_trace(&self) -> String {
        let mut out = String::from("# block_index, exchange_id, direction, amount\n");
        for e in &self.events {
            out.push_str(&format!(
                "{}, {}, {}, {}\n",
                e.block, e.exchange_id, e.direction, e.amount
            ));
        }
        out
    }
}

/// `pairs` trades each followed by its exact inverse, sized against the
/// market state after the first arbitrage leg of `budget`.
pub fn symmetric_stream<R: Rng>(
    market: &TwoExchangeMarket,
    budget: f64,
    spec: &SyntheticSpec,
    pairs: usize,
    rng: &mut R,
) -> Result<TradeStream, AtomicityError> {
    let base = TradeStream::synthetic(spec, pairs, rng)?;
    let mut m = market.clone();
    if let Some(buy) = market.cheaper_side() {
        m.apply(buy, Direction::XY, budget);
    }
    let mut events = Vec::with_capacity(2 * pairs);
    for e in base.events {
        let side = e.exchange.expect("synthetic events are routed");
        let out = m.apply(side, e.direction, e.amount);
        let back = match e.direction {
            Direction::XY => Direction::YX,
            Direction::YX => Direction::XY,
        };
        m.apply(side, back, out);
        let inverse = TradeEvent::new(e.block, side, back, out);
        events.push(e);
        events.push(inverse);
    }
    Ok(TradeStream { events })
}
