//! State-transition models for the six protocol primitives: flash loans,
//! fixed-price markets, constant product AMMs, automated price reserves,
//! collateralized lending and margin trading.

mod ids;
mod ledger;
pub mod ops;
mod pools;
mod state;


use thiserror::Error;

pub use ids::{AssetId, EntityId, PoolId};
pub use ledger::BalanceLedger;
pub use ops::{
    amm_spot_price_y, amm_swap_x_for_y, amm_swap_y_for_x, collateralized_borrow,
    collateralized_borrow_with, collateralized_repay, compute_slippage, flash_loan, flash_repay,
    margin_short, reserve_convert_x_to_y, reserve_price_y, sell_x_for_y, BorrowOptions, Residual,
    ResidualKind, Transition, STRICT_TOLERANCE,
};
pub use pools::{
    AutomatedPriceReserve, ConstantProductAmm, FixedPriceMarket, FlashLoanPool, InterestModel,
    LendingPool, MarginPlatform, Pool, Position, Venue,
};
pub use state::WorldState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown pool `{0}`")]
    UnknownPool(PoolId),
    #[error("pool `{pool}` is a {found} pool, expected {expected}")]
    WrongPoolKind {
        pool: PoolId,
        expected: &'static str,
        found: &'static str,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{what} must be non-negative, got {value}")]
    NegativeAmount { what: &'static str, value: f64 },
    #[error("{what} is not finite ({value})")]
    NonFinite { what: &'static str, value: f64 },
    #[error("`{trader}` has no open position on `{pool}`")]
    NoOpenPosition { pool: PoolId, trader: EntityId },
    #[error("{kind} constraint violated (residual {value})")]
    ConstraintViolated { kind: ResidualKind, value: f64 },
}
