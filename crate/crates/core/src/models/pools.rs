use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AssetId, EntityId, ModelError, PoolId};

/// Fee charged on a flash loan of `b` tokens.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum InterestModel {
    #[default]
    Zero,
    /// Constant absolute fee, e.g. 1e-7 ETH on dYdX.
    Constant { fee: f64 },
    /// Proportional fee, e.g. 0.0009 on Aave.
    Rate { rate: f64 },
}

impl InterestModel {
    pub fn interest(&self, amount: f64) -> f64 {
        match *self {
            InterestModel::Zero => 0.0,
            InterestModel::Constant { fee } => fee,
            InterestModel::Rate { rate } => rate * amount,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let ok = match *self {
            InterestModel::Zero => true,
            InterestModel::Constant { fee } => fee.is_finite() && fee >= 0.0,
            InterestModel::Rate { rate } => rate.is_finite() && rate >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidConfig(format!(
                "negative or non-finite interest model {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlashLoanPool {
    pub asset: AssetId,
    /// Amount available to borrow (`vX` / `zX`).
    #[serde(rename = "vX")]
    pub available: f64,
    #[serde(default)]
    pub interest: InterestModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantProductAmm {
    pub asset_x: AssetId,
    pub asset_y: AssetId,
    #[serde(rename = "uX")]
    pub reserve_x: f64,
    #[serde(rename = "uY")]
    pub reserve_y: f64,
    #[serde(default)]
    pub fee: f64,
}

impl ConstantProductAmm {
    /// Output of `Y` for an input of `amount_x`.
    pub fn quote_x_for_y(&self, amount_x: f64) -> f64 {
        let effective = amount_x * (1.0 - self.fee);
        effective * self.reserve_y / (self.reserve_x + effective)
    }

    pub fn quote_y_for_x(&self, amount_y: f64) -> f64 {
        let effective = amount_y * (1.0 - self.fee);
        effective * self.reserve_x / (self.reserve_y + effective)
    }

    /// Price of `Y` in units of `X`.
    pub fn spot_price_y(&self) -> f64 {
        self.reserve_x / self.reserve_y
    }
}

/// Reserve quoting `minP * exp(lr * kX)` for `Y` in units of `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutomatedPriceReserve {
    pub asset_x: AssetId,
    pub asset_y: AssetId,
    #[serde(rename = "kX")]
    pub inventory_x: f64,
    #[serde(rename = "lr")]
    pub liquidity_rate: f64,
    #[serde(rename = "minP")]
    pub min_price: f64,
    #[serde(rename = "maxP")]
    pub max_price: f64,
}

impl AutomatedPriceReserve {
    pub fn price_at(&self, inventory_x: f64) -> f64 {
        self.min_price * (self.liquidity_rate * inventory_x).exp()
    }

    pub fn price_y(&self) -> f64 {
        self.price_at(self.inventory_x)
    }

    /// Output of `Y` for `amount_x`, priced at the pre-trade inventory.
    pub fn quote_x_to_y(&self, amount_x: f64) -> f64 {
        -(-self.liquidity_rate * amount_x).exp_m1() / (self.liquidity_rate * self.price_y())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPriceMarket {
    pub asset_x: AssetId,
    pub asset_y: AssetId,
    /// Price of `Y` in units of `X`.
    #[serde(rename = "pm")]
    pub price: f64,
    /// Cap on the cumulative `Y` sold; absent means unbounded.
    #[serde(rename = "maxY", default, skip_serializing_if = "Option::is_none")]
    pub max_y: Option<f64>,
    #[serde(default)]
    pub sold_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub trader: EntityId,
    pub collateral: f64,
    pub debt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LendingPool {
    pub collateral_asset: AssetId,
    pub debt_asset: AssetId,
    #[serde(rename = "cf")]
    pub collateral_factor: f64,
    /// Collateral units per debt unit. May be left out when every borrow
    /// supplies its own rate (e.g. one read from an AMM oracle).
    #[serde(rename = "er", default, skip_serializing_if = "Option::is_none")]
    pub exchange_rate: Option<f64>,
    #[serde(rename = "zY")]
    pub available_debt: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub positions: Vec<Position>,
}

impl LendingPool {
    pub fn open_debt(&self, trader: &EntityId) -> f64 {
        self.positions
            .iter()
            .filter(|p| &p.trader == trader)
            .map(|p| p.debt)
            .sum()
    }
}

/// Where a margin platform executes the leveraged trade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Venue {
    /// Swap through a constant product AMM in the same state.
    Amm(PoolId),
    /// Fill at an explicit external price (`X` per `Y`).
    Emp(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginPlatform {
    pub collateral_asset: AssetId,
    pub short_asset: AssetId,
    pub leverage: f64,
    pub ocr: f64,
    /// Platform funds available to lever up (`wX`).
    #[serde(rename = "wX")]
    pub available_x: f64,
    pub venue: Venue,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub locked: BTreeMap<EntityId, f64>,
}

impl MarginPlatform {
    pub fn locked_of(&self, entity: &EntityId) -> f64 {
        self.locked.get(entity).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pool {
    FlashLoan(FlashLoanPool),
    ConstantProduct(ConstantProductAmm),
    PriceReserve(AutomatedPriceReserve),
    FixedPrice(FixedPriceMarket),
    Lending(LendingPool),
    Margin(MarginPlatform),
}

impl Pool {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Pool::FlashLoan(_) => "flash_loan",
            Pool::ConstantProduct(_) => "constant_product",
            Pool::PriceReserve(_) => "price_reserve",
            Pool::FixedPrice(_) => "fixed_price",
            Pool::Lending(_) => "lending",
            Pool::Margin(_) => "margin",
        }
    }

    /// Every asset the pool trades, holds or lends.
    pub fn assets(&self) -> Vec<&AssetId> {
        match self {
            Pool::FlashLoan(p) => vec![&p.asset],
            Pool::ConstantProduct(p) => vec![&p.asset_x, &p.asset_y],
            Pool::PriceReserve(p) => vec![&p.asset_x, &p.asset_y],
            Pool::FixedPrice(p) => vec![&p.asset_x, &p.asset_y],
            Pool::Lending(p) => vec![&p.collateral_asset, &p.debt_asset],
            Pool::Margin(p) => vec![&p.collateral_asset, &p.short_asset],
        }
    }

    /// Checks the construction-time invariants of each pool kind.
    pub fn validate(&self, id: &PoolId) -> Result<(), ModelError> {
        let bad = |what: &str| Err(ModelError::InvalidConfig(format!("pool `{id}`: {what}")));
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        match self {
            Pool::FlashLoan(p) => {
                if !finite_nonneg(p.available) {
                    return bad("vX must be >= 0");
                }
                p.interest.validate()
            }
            Pool::ConstantProduct(p) => {
                if !(p.reserve_x.is_finite() && p.reserve_x > 0.0) {
                    return bad("uX must be > 0");
                }
                if !(p.reserve_y.is_finite() && p.reserve_y > 0.0) {
                    return bad("uY must be > 0");
                }
                if !(0.0..1.0).contains(&p.fee) {
                    return bad("fee must lie in [0, 1)");
                }
                Ok(())
            }
            Pool::PriceReserve(p) => {
                if !(p.liquidity_rate.is_finite() && p.liquidity_rate > 0.0) {
                    return bad("lr must be > 0");
                }
                if !finite_nonneg(p.inventory_x) {
                    return bad("kX must be >= 0");
                }
                if !(p.min_price.is_finite() && p.min_price > 0.0) {
                    return bad("minP must be > 0");
                }
                let price = p.price_y();
                if !(p.max_price.is_finite() && p.min_price <= price && price <= p.max_price) {
                    return bad("require minP <= minP*exp(lr*kX) <= maxP");
                }
                Ok(())
            }
            Pool::FixedPrice(p) => {
                if !(p.price.is_finite() && p.price > 0.0) {
                    return bad("pm must be > 0");
                }
                if let Some(cap) = p.max_y {
                    if !finite_nonneg(cap) {
                        return bad("maxY must be >= 0");
                    }
                    if p.sold_y > cap {
                        return bad("cumulative Y sold exceeds maxY");
                    }
                }
                Ok(())
            }
            Pool::Lending(p) => {
                if !(p.collateral_factor > 0.0 && p.collateral_factor < 1.0) {
                    return bad("cf must lie in (0, 1)");
                }
                if let Some(er) = p.exchange_rate {
                    if !(er.is_finite() && er > 0.0) {
                        return bad("er must be > 0");
                    }
                }
                if !finite_nonneg(p.available_debt) {
                    return bad("zY must be >= 0");
                }
                Ok(())
            }
            Pool::Margin(p) => {
                if !(p.leverage.is_finite() && p.leverage >= 1.0) {
                    return bad("leverage must be >= 1");
                }
                if !(p.ocr.is_finite() && p.ocr > 0.0) {
                    return bad("ocr must be > 0");
                }
                if !p.available_x.is_finite() {
                    return bad("wX must be finite");
                }
                if let Venue::Emp(price) = p.venue {
                    if !(price.is_finite() && price > 0.0) {
                        return bad("emp must be > 0");
                    }
                }
                if p.locked.values().any(|v| *v < 0.0) {
                    return bad("locked short positions must be >= 0");
                }
                Ok(())
            }
        }
    }
}
