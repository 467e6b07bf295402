//! Value of atomicity for two-exchange arbitrage.
//!
//! An arbitrageur buys `Y` on the cheaper of two constant product pools
//! (trade `T_A`) and sells it on the other (trade `T_B`). Executed atomically
//! the profit is `aarb`. When `i` unrelated trades land between the two legs,
//! the profit is `naarb` and the inventory held in between is revalued by the
//! holding value `hv`.

mod stream;
mod sweep;


use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::ConstantProductAmm;

pub use stream::{symmetric_stream, Direction, Side, SyntheticSpec, TradeEvent, TradeStream};
pub use sweep::{rows_to_csv, sweep, StreamSource, SweepConfig, SweepRow};

#[derive(Debug, Error)]
pub enum AtomicityError {
    #[error("{0}")]
    Invalid(String),
    #[error("stream exhausted: needed {needed} events, only {available} available")]
    StreamExhausted { needed: usize, available: usize },
    #[error("trace line {line}: {message}")]
    Trace { line: u64, message: String },
    #[error("market: {0}")]
    Market(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

const BUILTIN_MARKET: &str = include_str!("../../scenarios/dai_eth_market.json");

/// Two constant product pools trading the same pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoExchangeMarket {
    pub exchange_a: ConstantProductAmm,
    pub exchange_b: ConstantProductAmm,
}

impl TwoExchangeMarket {
    pub fn new(
        exchange_a: ConstantProductAmm,
        exchange_b: ConstantProductAmm,
    ) -> Result<Self, AtomicityError> {
        let market = Self {
            exchange_a,
            exchange_b,
        };
        market.validate()?;
        Ok(market)
    }

    pub fn validate(&self) -> Result<(), AtomicityError> {
        let (a, b) = (&self.exchange_a, &self.exchange_b);
        if a.asset_x != b.asset_x || a.asset_y != b.asset_y {
            return Err(AtomicityError::Invalid(
                "both exchanges must trade the same pair".into(),
            ));
        }
        for (name, p) in [("A", a), ("B", b)] {
            let ok = |v: f64| v.is_finite() && v > 0.0;
            if !ok(p.reserve_x) || !ok(p.reserve_y) {
                return Err(AtomicityError::Invalid(format!(
                    "exchange {name}: reserves must be > 0"
                )));
            }
            if !(0.0..1.0).contains(&p.fee) {
                return Err(AtomicityError::Invalid(format!(
                    "exchange {name}: fee must lie in [0, 1)"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, AtomicityError> {
        let market: Self = serde_json::from_str(text)?;
        market.validate()?;
        Ok(market)
    }

    pub fn load(path: &Path) -> Result<Self, AtomicityError> {
        let text = std::fs::read_to_string(path).map_err(|source| AtomicityError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// A DAI/ETH market with a small price gap between the pools.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_MARKET).expect("bundled market is valid")
    }

    pub fn pool(&self, side: Side) -> &ConstantProductAmm {
        match side {
            Side::A => &self.exchange_a,
            Side::B => &self.exchange_b,
        }
    }

    fn pool_mut(&mut self, side: Side) -> &mut ConstantProductAmm {
        match side {
            Side::A => &mut self.exchange_a,
            Side::B => &mut self.exchange_b,
        }
    }

    /// Exchange on which `Y` is strictly cheaper, if any.
    pub fn cheaper_side(&self) -> Option<Side> {
        let (pa, pb) = (
            self.exchange_a.spot_price_y(),
            self.exchange_b.spot_price_y(),
        );
        if pa < pb {
            Some(Side::A)
        } else if pb < pa {
            Some(Side::B)
        } else {
            None
        }
    }

    /// Mean of the two spot prices of `Y` in `X`.
    pub fn mean_price_y(&self) -> f64 {
        0.5 * (self.exchange_a.spot_price_y() + self.exchange_b.spot_price_y())
    }

    /// Applies one swap and returns the output amount.
    pub fn apply(&mut self, side: Side, direction: Direction, amount: f64) -> f64 {
        let pool = self.pool_mut(side);
        match direction {
            Direction::XY => {
                let out = pool.quote_x_for_y(amount);
                pool.reserve_x += amount;
                pool.reserve_y -= out;
                out
            }
            Direction::YX => {
                let out = pool.quote_y_for_x(amount);
                pool.reserve_y += amount;
                pool.reserve_x -= out;
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArbOutcome {
    pub i: usize,
    pub aarb: f64,
    pub naarb: f64,
    pub hv: f64,
    /// `Y` bought by the first leg and sold by the second.
    pub held: f64,
    pub profit_difference: f64,
}

impl ArbOutcome {
    pub fn identity_residual(&self) -> f64 {
        self.profit_difference - (self.aarb - (self.naarb - self.hv))
    }
}

fn check_budget(budget: f64) -> Result<(), AtomicityError> {
    if budget.is_finite() && budget > 0.0 {
        Ok(())
    } else {
        Err(AtomicityError::Invalid(format!(
            "budget must be > 0, got {budget}"
        )))
    }
}

/// Runs the first leg, returning the post-trade market, the selling side and
/// the quantity held. Without a price gap no trade happens.
fn first_leg(market: &TwoExchangeMarket, budget: f64) -> (TwoExchangeMarket, Option<Side>, f64) {
    let mut m = market.clone();
    match market.cheaper_side() {
        None => (m, None, 0.0),
        Some(buy) => {
            let held = m.apply(buy, Direction::XY, budget);
            (m, Some(buy.other()), held)
        }
    }
}

/// Profit in `X` of both legs executed back to back, and the `Y` held between them.
pub fn atomic_arbitrage(
    market: &TwoExchangeMarket,
    budget: f64,
) -> Result<(f64, f64), AtomicityError> {
    check_budget(budget)?;
    let (mut m, sell, held) = first_leg(market, budget);
    let Some(sell) = sell else {
        return Ok((0.0, 0.0));
    };
    let proceeds = m.apply(sell, Direction::YX, held);
    Ok((proceeds - budget, held))
}

/// Budget maximizing `aarb` for fee-free pools: the two hops compose into a
/// single constant product curve whose optimal input equalizes marginal prices.
pub fn optimal_budget(market: &TwoExchangeMarket) -> f64 {
    let Some(buy) = market.cheaper_side() else {
        return 0.0;
    };
    let (p1, p2) = (market.pool(buy), market.pool(buy.other()));
    let y = p1.reserve_y + p2.reserve_y;
    let e_in = p1.reserve_x * p2.reserve_y / y;
    let e_out = p2.reserve_x * p1.reserve_y / y;
    ((e_in * e_out).sqrt() - e_in).max(0.0)
}

/// Both legs with the first `i` events of `events` executed in between.
pub fn non_atomic_arbitrage(
    market: &TwoExchangeMarket,
    budget: f64,
    events: &[TradeEvent],
    i: usize,
) -> Result<ArbOutcome, AtomicityError> {
    check_budget(budget)?;
    if events.len() < i {
        return Err(AtomicityError::StreamExhausted {
            needed: i,
            available: events.len(),
        });
    }
    let (after_first, sell, held) = first_leg(market, budget);
    let Some(sell) = sell else {
        return Ok(ArbOutcome {
            i,
            aarb: 0.0,
            naarb: 0.0,
            hv: 0.0,
            held: 0.0,
            profit_difference: 0.0,
        });
    };
    let aarb = after_first.clone().apply(sell, Direction::YX, held) - budget;

    let mut m = after_first;
    let before = m.mean_price_y();
    for e in &events[..i] {
        if let Some(side) = e.exchange {
            m.apply(side, e.direction, e.amount);
        }
    }
    let hv = held * (m.mean_price_y() - before);
    let naarb = m.apply(sell, Direction::YX, held) - budget;
    Ok(ArbOutcome {
        i,
        aarb,
        naarb,
        hv,
        held,
        profit_difference: aarb - (naarb - hv),
    })
}
