use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    AssetId, AutomatedPriceReserve, BalanceLedger, ConstantProductAmm, EntityId, FixedPriceMarket,
    FlashLoanPool, LendingPool, MarginPlatform, ModelError, Pool, PoolId,
};

/// Snapshot of every balance and pool at step `i` of a chain of transitions.
///
/// Operations never mutate a state in place; they clone, modify the copy and
/// bump `step_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    ledger: BalanceLedger,
    pools: BTreeMap<PoolId, Pool>,
    #[serde(default)]
    step_index: usize,
}

macro_rules! pool_accessor {
    ($fn_name:ident, $variant:ident, $ty:ty, $kind:literal) => {
        pub fn $fn_name(&self, id: &PoolId) -> Result<&$ty, ModelError> {
            match self.pool(id)? {
                Pool::$variant(p) => Ok(p),
                other => Err(ModelError::WrongPoolKind {
                    pool: id.clone(),
                    expected: $kind,
                    found: other.kind_name(),
                }),
            }
        }
    };
}

macro_rules! pool_accessor_mut {
    ($fn_name:ident, $variant:ident, $ty:ty, $kind:literal) => {
        pub(crate) fn $fn_name(&mut self, id: &PoolId) -> Result<&mut $ty, ModelError> {
            match self.pools.get_mut(id) {
                Some(Pool::$variant(p)) => Ok(p),
                Some(other) => Err(ModelError::WrongPoolKind {
                    pool: id.clone(),
                    expected: $kind,
                    found: other.kind_name(),
                }),
                None => Err(ModelError::UnknownPool(id.clone())),
            }
        }
    };
}

impl WorldState {
    /// Builds a validated initial state (`step_index = 0`).
    pub fn new(ledger: BalanceLedger, pools: BTreeMap<PoolId, Pool>) -> Result<Self, ModelError> {
        let state = Self {
            ledger,
            pools,
            step_index: 0,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (id, pool) in &self.pools {
            pool.validate(id)?;
        }
        for (id, pool) in &self.pools {
            if let Pool::Margin(m) = pool {
                if let super::Venue::Amm(venue) = &m.venue {
                    let amm = self.amm(venue).map_err(|e| {
                        ModelError::InvalidConfig(format!("margin platform `{id}`: {e}"))
                    })?;
                    if amm.asset_x != m.collateral_asset || amm.asset_y != m.short_asset {
                        return Err(ModelError::InvalidConfig(format!(
                            "margin platform `{id}` trades {}/{} but venue `{venue}` is {}/{}",
                            m.collateral_asset, m.short_asset, amm.asset_x, amm.asset_y
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn ledger(&self) -> &BalanceLedger {
        &self.ledger
    }

    pub fn pools(&self) -> &BTreeMap<PoolId, Pool> {
        &self.pools
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn balance(&self, entity: &EntityId, asset: &AssetId) -> f64 {
        self.ledger.balance(entity, asset)
    }

    pub fn pool(&self, id: &PoolId) -> Result<&Pool, ModelError> {
        self.pools
            .get(id)
            .ok_or_else(|| ModelError::UnknownPool(id.clone()))
    }

    pool_accessor!(flash_pool, FlashLoan, FlashLoanPool, "flash_loan");
    pool_accessor!(amm, ConstantProduct, ConstantProductAmm, "constant_product");
    pool_accessor!(
        reserve,
        PriceReserve,
        AutomatedPriceReserve,
        "price_reserve"
    );
    pool_accessor!(fixed_market, FixedPrice, FixedPriceMarket, "fixed_price");
    pool_accessor!(lending, Lending, LendingPool, "lending");
    pool_accessor!(margin, Margin, MarginPlatform, "margin");

    pool_accessor_mut!(flash_pool_mut, FlashLoan, FlashLoanPool, "flash_loan");
    pool_accessor_mut!(
        amm_mut,
        ConstantProduct,
        ConstantProductAmm,
        "constant_product"
    );
    pool_accessor_mut!(
        reserve_mut,
        PriceReserve,
        AutomatedPriceReserve,
        "price_reserve"
    );
    pool_accessor_mut!(
        fixed_market_mut,
        FixedPrice,
        FixedPriceMarket,
        "fixed_price"
    );
    pool_accessor_mut!(lending_mut, Lending, LendingPool, "lending");
    pool_accessor_mut!(margin_mut, Margin, MarginPlatform, "margin");

    pub(crate) fn ledger_mut(&mut self) -> &mut BalanceLedger {
        &mut self.ledger
    }

    pub(crate) fn set_step_index(&mut self, index: usize) {
        self.step_index = index;
    }

    /// Copy of `self` positioned one step further along the chain.
    pub(crate) fn successor(&self) -> Self {
        let mut next = self.clone();
        next.step_index += 1;
        next
    }

    /// Non-negativity of every ledger entry and locked short position.
    pub fn balances_non_negative(&self, tolerance: f64) -> bool {
        self.ledger.is_non_negative(tolerance)
            && self.pools.values().all(|p| match p {
                Pool::Margin(m) => m.locked.values().all(|v| *v >= -tolerance),
                _ => true,
            })
    }
}
