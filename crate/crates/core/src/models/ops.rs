//! Pure transition functions over [`WorldState`].
//!
//! Every endpoint returns the successor state together with its constraint
//! residuals. A residual `g >= 0` means the constraint holds; negative values
//! are reported rather than raised so that an optimizer can walk through
//! infeasible regions. [`Transition::strict`] turns violations into errors for
//! plain simulation runs.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{EntityId, ModelError, PoolId, Position, Venue, WorldState};

/// Tolerance used by strict simulation runs.
pub const STRICT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// `zX - b`: loan within the pool's available liquidity.
    LoanCapacity,
    /// `B(A;X) - b - interest(b)`: enough funds to repay a flash loan.
    RepayFunds,
    /// `B(A;X) - amount`: trader holds the input of a trade.
    TraderFunds,
    /// `maxY - q/pm`: fixed-price market supply.
    SupplyCap,
    /// `P(S') - minP`.
    PriceFloor,
    /// `maxP - P(S')`.
    PriceCap,
    /// `zY - bY`: lending pool liquidity.
    BorrowCapacity,
    /// `B(A;Y) - bY`: enough debt asset to close a position.
    DebtFunds,
    /// `wX + d - d*leverage/ocr`: margin platform liquidity.
    MarginLiquidity,
}

impl fmt::Display for ResidualKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ResidualKind::LoanCapacity => "loan capacity",
            ResidualKind::RepayFunds => "repay funds",
            ResidualKind::TraderFunds => "trader funds",
            ResidualKind::SupplyCap => "supply cap",
            ResidualKind::PriceFloor => "price floor",
            ResidualKind::PriceCap => "price cap",
            ResidualKind::BorrowCapacity => "borrow capacity",
            ResidualKind::DebtFunds => "debt funds",
            ResidualKind::MarginLiquidity => "margin liquidity",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub kind: ResidualKind,
    pub value: f64,
}

impl Residual {
    fn new(kind: ResidualKind, value: f64) -> Self {
        Self { kind, value }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: WorldState,
    pub residuals: Vec<Residual>,
}

impl Transition {
    pub fn residual(&self, kind: ResidualKind) -> Option<f64> {
        self.residuals
            .iter()
            .find(|r| r.kind == kind)
            .map(|r| r.value)
    }

    /// Fails on the first residual below `-STRICT_TOLERANCE`.
    pub fn strict(self) -> Result<Self, ModelError> {
        if let Some(r) = self.residuals.iter().find(|r| r.value < -STRICT_TOLERANCE) {
            return Err(ModelError::ConstraintViolated {
                kind: r.kind,
                value: r.value,
            });
        }
        Ok(self)
    }
}

fn finite(what: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::NonFinite { what, value })
    }
}

fn non_negative(what: &'static str, value: f64) -> Result<f64, ModelError> {
    finite(what, value)?;
    if value < 0.0 {
        return Err(ModelError::NegativeAmount { what, value });
    }
    Ok(value)
}

pub fn flash_loan(
    state: &WorldState,
    pool: &PoolId,
    borrower: &EntityId,
    amount: f64,
) -> Result<Transition, ModelError> {
    let amount = finite("loan amount", amount)?;
    let fp = state.flash_pool(pool)?;
    let asset = fp.asset.clone();
    let residual = fp.available - amount;

    let mut next = state.successor();
    next.ledger_mut().credit(borrower, &asset, amount);
    next.flash_pool_mut(pool)?.available -= amount;
    Ok(Transition {
        state: next,
        residuals: vec![Residual::new(ResidualKind::LoanCapacity, residual)],
    })
}

pub fn flash_repay(
    state: &WorldState,
    pool: &PoolId,
    borrower: &EntityId,
    amount: f64,
) -> Result<Transition, ModelError> {
    let amount = finite("repay amount", amount)?;
    let fp = state.flash_pool(pool)?;
    let asset = fp.asset.clone();
    let interest = fp.interest.interest(amount);
    let due = amount + interest;
    let residual = state.balance(borrower, &asset) - due;

    let mut next = state.successor();
    next.ledger_mut().debit(borrower, &asset, due);
    next.flash_pool_mut(pool)?.available += due;
    Ok(Transition {
        state: next,
        residuals: vec![Residual::new(ResidualKind::RepayFunds, residual)],
    })
}

/// Buys `Y` with `amount` of `X` at the market's fixed price.
pub fn sell_x_for_y(
    state: &WorldState,
    market: &PoolId,
    trader: &EntityId,
    amount: f64,
) -> Result<Transition, ModelError> {
    let amount = finite("sell amount", amount)?;
    let m = state.fixed_market(market)?;
    if m.price.is_nan() || m.price <= 0.0 {
        return Err(ModelError::InvalidConfig(format!(
            "market `{market}`: pm must be > 0"
        )));
    }
    let bought = amount / m.price;
    let mut residuals = vec![Residual::new(
        ResidualKind::TraderFunds,
        state.balance(trader, &m.asset_x) - amount,
    )];
    if let Some(cap) = m.max_y {
        residuals.push(Residual::new(
            ResidualKind::SupplyCap,
            cap - m.sold_y - bought,
        ));
    }
    let (x, y) = (m.asset_x.clone(), m.asset_y.clone());

    let mut next = state.successor();
    next.ledger_mut().debit(trader, &x, amount);
    next.ledger_mut().credit(trader, &y, bought);
    next.fixed_market_mut(market)?.sold_y += bought;
    Ok(Transition {
        state: next,
        residuals,
    })
}

pub fn amm_swap_x_for_y(
    state: &WorldState,
    amm: &PoolId,
    trader: &EntityId,
    amount: f64,
) -> Result<Transition, ModelError> {
    let amount = non_negative("swap amount", amount)?;
    let pool = state.amm(amm)?;
    check_reserves(amm, pool.reserve_x, pool.reserve_y)?;
    let out = pool.quote_x_for_y(amount);
    let residual = state.balance(trader, &pool.asset_x) - amount;
    let (x, y) = (pool.asset_x.clone(), pool.asset_y.clone());

    let mut next = state.successor();
    next.ledger_mut().debit(trader, &x, amount);
    next.ledger_mut().credit(trader, &y, out);
    let p = next.amm_mut(amm)?;
    p.reserve_x += amount;
    p.reserve_y -= out;
    Ok(Transition {
        state: next,
        residuals: vec![Residual::new(ResidualKind::TraderFunds, residual)],
    })
}

pub fn amm_swap_y_for_x(
    state: &WorldState,
    amm: &PoolId,
    trader: &EntityId,
    amount: f64,
) -> Result<Transition, ModelError> {
    let amount = non_negative("swap amount", amount)?;
    let pool = state.amm(amm)?;
    check_reserves(amm, pool.reserve_x, pool.reserve_y)?;
    let out = pool.quote_y_for_x(amount);
    let residual = state.balance(trader, &pool.asset_y) - amount;
    let (x, y) = (pool.asset_x.clone(), pool.asset_y.clone());

    let mut next = state.successor();
    next.ledger_mut().debit(trader, &y, amount);
    next.ledger_mut().credit(trader, &x, out);
    let p = next.amm_mut(amm)?;
    p.reserve_y += amount;
    p.reserve_x -= out;
    Ok(Transition {
        state: next,
        residuals: vec![Residual::new(ResidualKind::TraderFunds, residual)],
    })
}

fn check_reserves(amm: &PoolId, x: f64, y: f64) -> Result<(), ModelError> {
    if x > 0.0 && y > 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidConfig(format!(
            "amm `{amm}`: reserves must be positive"
        )))
    }
}

/// `uX / uY`, the price of `Y` in units of `X`.
pub fn amm_spot_price_y(state: &WorldState, amm: &PoolId) -> Result<f64, ModelError> {
    let pool = state.amm(amm)?;
    if pool.reserve_y.is_nan() || pool.reserve_y <= 0.0 {
        return Err(ModelError::InvalidConfig(format!(
            "amm `{amm}`: uY must be positive"
        )));
    }
    Ok(pool.spot_price_y())
}

/// `minP * exp(lr * kX)`. The `maxP` cap is a residual of conversions, not a clamp.
pub fn reserve_price_y(state: &WorldState, reserve: &PoolId) -> Result<f64, ModelError> {
    Ok(state.reserve(reserve)?.price_y())
}

pub fn reserve_convert_x_to_y(
    state: &WorldState,
    reserve: &PoolId,
    trader: &EntityId,
    amount: f64,
) -> Result<Transition, ModelError> {
    let amount = non_negative("conversion amount", amount)?;
    let r = state.reserve(reserve)?;
    let out = r.quote_x_to_y(amount);
    let price_after = r.price_at(r.inventory_x + amount);
    if !price_after.is_finite() || !out.is_finite() {
        return Err(ModelError::NonFinite {
            what: "reserve price",
            value: price_after,
        });
    }
    let residuals = vec![
        Residual::new(
            ResidualKind::TraderFunds,
            state.balance(trader, &r.asset_x) - amount,
        ),
        Residual::new(ResidualKind::PriceFloor, price_after - r.min_price),
        Residual::new(ResidualKind::PriceCap, r.max_price - price_after),
    ];
    let (x, y) = (r.asset_x.clone(), r.asset_y.clone());

    let mut next = state.successor();
    next.ledger_mut().debit(trader, &x, amount);
    next.ledger_mut().credit(trader, &y, out);
    next.reserve_mut(reserve)?.inventory_x += amount;
    Ok(Transition {
        state: next,
        residuals,
    })
}

/// Extra knobs for [`collateralized_borrow_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BorrowOptions {
    /// Overrides the pool's `er` (collateral units per debt unit).
    pub exchange_rate: Option<f64>,
    /// Borrow `min(bY, zY)` instead of reporting a negative capacity residual.
    pub cap_to_available: bool,
}

pub fn collateralized_borrow(
    state: &WorldState,
    pool: &PoolId,
    trader: &EntityId,
    collateral: f64,
) -> Result<Transition, ModelError> {
    collateralized_borrow_with(state, pool, trader, collateral, BorrowOptions::default())
}

pub fn collateralized_borrow_with(
    state: &WorldState,
    pool: &PoolId,
    trader: &EntityId,
    collateral: f64,
    options: BorrowOptions,
) -> Result<Transition, ModelError> {
    let collateral = non_negative("collateral", collateral)?;
    let lp = state.lending(pool)?;
    let er = match options.exchange_rate.or(lp.exchange_rate) {
        Some(er) => finite("exchange rate", er)?,
        None => {
            return Err(ModelError::InvalidConfig(format!(
                "lending pool `{pool}` has no er and none was supplied"
            )))
        }
    };
    if er.is_nan() || er <= 0.0 {
        return Err(ModelError::InvalidConfig(format!(
            "lending pool `{pool}`: er must be > 0"
        )));
    }
    let mut borrowed = collateral * lp.collateral_factor / er;
    if options.cap_to_available {
        borrowed = borrowed.min(lp.available_debt.max(0.0));
    }
    let residuals = vec![
        Residual::new(
            ResidualKind::TraderFunds,
            state.balance(trader, &lp.collateral_asset) - collateral,
        ),
        Residual::new(ResidualKind::BorrowCapacity, lp.available_debt - borrowed),
    ];
    let (cx, dy) = (lp.collateral_asset.clone(), lp.debt_asset.clone());

    let mut next = state.successor();
    next.ledger_mut().debit(trader, &cx, collateral);
    next.ledger_mut().credit(trader, &dy, borrowed);
    let lp = next.lending_mut(pool)?;
    lp.available_debt -= borrowed;
    lp.positions.push(Position {
        trader: trader.clone(),
        collateral,
        debt: borrowed,
    });
    Ok(Transition {
        state: next,
        residuals,
    })
}

/// Closes the trader's most recent open position on `pool`.
pub fn collateralized_repay(
    state: &WorldState,
    pool: &PoolId,
    trader: &EntityId,
) -> Result<Transition, ModelError> {
    let lp = state.lending(pool)?;
    let index = lp
        .positions
        .iter()
        .rposition(|p| &p.trader == trader)
        .ok_or_else(|| ModelError::NoOpenPosition {
            pool: pool.clone(),
            trader: trader.clone(),
        })?;
    let position = lp.positions[index].clone();
    let residual = state.balance(trader, &lp.debt_asset) - position.debt;
    let (cx, dy) = (lp.collateral_asset.clone(), lp.debt_asset.clone());

    let mut next = state.successor();
    next.ledger_mut().debit(trader, &dy, position.debt);
    next.ledger_mut().credit(trader, &cx, position.collateral);
    let lp = next.lending_mut(pool)?;
    lp.available_debt += position.debt;
    lp.positions.remove(index);
    Ok(Transition {
        state: next,
        residuals: vec![Residual::new(ResidualKind::DebtFunds, residual)],
    })
}

/// Opens a leveraged short of `Y` against `collateral` of `X`.
///
/// The platform buys `Y` with `collateral * leverage / ocr` of `X` at its
/// venue and locks the output for the trader. No equity check is performed on
/// the resulting position.
pub fn margin_short(
    state: &WorldState,
    platform: &PoolId,
    trader: &EntityId,
    collateral: f64,
) -> Result<Transition, ModelError> {
    let collateral = non_negative("margin collateral", collateral)?;
    let mp = state.margin(platform)?;
    let levered = collateral * mp.leverage / mp.ocr;
    let residuals = vec![
        Residual::new(
            ResidualKind::TraderFunds,
            state.balance(trader, &mp.collateral_asset) - collateral,
        ),
        Residual::new(
            ResidualKind::MarginLiquidity,
            mp.available_x + collateral - levered,
        ),
    ];
    let x = mp.collateral_asset.clone();
    let venue = mp.venue.clone();

    let mut next = state.successor();
    next.ledger_mut().debit(trader, &x, collateral);
    let locked = match venue {
        Venue::Amm(amm_id) => {
            let amm = next.amm_mut(&amm_id).map_err(|e| match e {
                ModelError::UnknownPool(id) => ModelError::InvalidConfig(format!(
                    "margin platform `{platform}` has no venue `{id}`"
                )),
                other => other,
            })?;
            check_reserves(&amm_id, amm.reserve_x, amm.reserve_y)?;
            let out = amm.quote_x_for_y(levered);
            amm.reserve_x += levered;
            amm.reserve_y -= out;
            out
        }
        Venue::Emp(price) => levered / price,
    };
    let mp = next.margin_mut(platform)?;
    mp.available_x -= levered - collateral;
    *mp.locked.entry(trader.clone()).or_insert(0.0) += locked;
    Ok(Transition {
        state: next,
        residuals,
    })
}

/// `(executed - expected) / expected`.
pub fn compute_slippage(expected_price: f64, executed_price: f64) -> Result<f64, ModelError> {
    if !expected_price.is_finite() || expected_price <= 0.0 {
        return Err(ModelError::InvalidConfig(format!(
            "expected price must be positive, got {expected_price}"
        )));
    }
    finite("executed price", executed_price)?;
    Ok((executed_price - expected_price) / expected_price)
}
