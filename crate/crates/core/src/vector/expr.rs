use serde::{Deserialize, Serialize};

use super::VectorError;
use crate::models::{AssetId, EntityId, PoolId, WorldState};

/// Which snapshot an expression reads.
///
/// `Step(j)` is `S_j`, the state after step `j` (`S_0` is the initial state).
/// `Current` is the running state just before the call being bound; inside
/// the objective or a constraint it means the final state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateRef {
    #[default]
    Current,
    Initial,
    Final,
    Step(usize),
}

/// Binding language for call amounts, objectives and derived constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Param(usize),
    Const(f64),
    Sum(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Vec<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Min(Vec<Expr>),
    /// The trader's balance of `asset`.
    Balance {
        asset: AssetId,
        #[serde(default)]
        at: StateRef,
    },
    /// `Y` locked for the trader on a margin platform.
    Locked {
        pool: PoolId,
        #[serde(default)]
        at: StateRef,
    },
    AmmReserveX {
        pool: PoolId,
        #[serde(default)]
        at: StateRef,
    },
    AmmReserveY {
        pool: PoolId,
        #[serde(default)]
        at: StateRef,
    },
    AmmSpotPrice {
        pool: PoolId,
        #[serde(default)]
        at: StateRef,
    },
    ReservePrice {
        pool: PoolId,
        #[serde(default)]
        at: StateRef,
    },
    FixedPrice {
        pool: PoolId,
        #[serde(default)]
        at: StateRef,
    },
    /// Total open debt of the trader on a lending pool.
    PositionDebt {
        pool: PoolId,
        #[serde(default)]
        at: StateRef,
    },
}

#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn param(i: usize) -> Self {
        Expr::Param(i)
    }

    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Self {
        Expr::Sum(terms.into_iter().collect())
    }

    pub fn sub(a: Expr, b: Expr) -> Self {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Self {
        Expr::Div(Box::new(a), Box::new(b))
    }

    /// Every state reference inside the expression.
    pub(crate) fn state_refs(&self, out: &mut Vec<StateRef>) {
        match self {
            Expr::Param(_) | Expr::Const(_) => {}
            Expr::Sum(xs) | Expr::Mul(xs) | Expr::Min(xs) => {
                xs.iter().for_each(|x| x.state_refs(out))
            }
            Expr::Sub(a, b) | Expr::Div(a, b) => {
                a.state_refs(out);
                b.state_refs(out);
            }
            Expr::Balance { at, .. }
            | Expr::Locked { at, .. }
            | Expr::AmmReserveX { at, .. }
            | Expr::AmmReserveY { at, .. }
            | Expr::AmmSpotPrice { at, .. }
            | Expr::ReservePrice { at, .. }
            | Expr::FixedPrice { at, .. }
            | Expr::PositionDebt { at, .. } => out.push(*at),
        }
    }

    pub(crate) fn params(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Param(i) => out.push(*i),
            Expr::Const(_) => {}
            Expr::Sum(xs) | Expr::Mul(xs) | Expr::Min(xs) => xs.iter().for_each(|x| x.params(out)),
            Expr::Sub(a, b) | Expr::Div(a, b) => {
                a.params(out);
                b.params(out);
            }
            _ => {}
        }
    }

    pub(crate) fn pools(&self, out: &mut Vec<PoolId>) {
        match self {
            Expr::Sum(xs) | Expr::Mul(xs) | Expr::Min(xs) => xs.iter().for_each(|x| x.pools(out)),
            Expr::Sub(a, b) | Expr::Div(a, b) => {
                a.pools(out);
                b.pools(out);
            }
            Expr::Locked { pool, .. }
            | Expr::AmmReserveX { pool, .. }
            | Expr::AmmReserveY { pool, .. }
            | Expr::AmmSpotPrice { pool, .. }
            | Expr::ReservePrice { pool, .. }
            | Expr::FixedPrice { pool, .. }
            | Expr::PositionDebt { pool, .. } => out.push(pool.clone()),
            _ => {}
        }
    }

    pub(crate) fn eval(&self, ctx: &Context<'_>) -> Result<f64, VectorError> {
        let v = match self {
            Expr::Param(i) => *ctx
                .params
                .get(*i)
                .ok_or_else(|| VectorError::Invalid(format!("parameter index {i} out of range")))?,
            Expr::Const(c) => *c,
            Expr::Sum(xs) => xs.iter().map(|x| x.eval(ctx)).sum::<Result<f64, _>>()?,
            Expr::Mul(xs) => xs.iter().map(|x| x.eval(ctx)).product::<Result<f64, _>>()?,
            Expr::Min(xs) => {
                let mut m = f64::INFINITY;
                for x in xs {
                    m = m.min(x.eval(ctx)?);
                }
                m
            }
            Expr::Sub(a, b) => a.eval(ctx)? - b.eval(ctx)?,
            Expr::Div(a, b) => a.eval(ctx)? / b.eval(ctx)?,
            Expr::Balance { asset, at } => ctx.state(*at)?.balance(ctx.trader, asset),
            Expr::Locked { pool, at } => ctx.state(*at)?.margin(pool)?.locked_of(ctx.trader),
            Expr::AmmReserveX { pool, at } => ctx.state(*at)?.amm(pool)?.reserve_x,
            Expr::AmmReserveY { pool, at } => ctx.state(*at)?.amm(pool)?.reserve_y,
            Expr::AmmSpotPrice { pool, at } => {
                crate::models::amm_spot_price_y(ctx.state(*at)?, pool)?
            }
            Expr::ReservePrice { pool, at } => {
                crate::models::reserve_price_y(ctx.state(*at)?, pool)?
            }
            Expr::FixedPrice { pool, at } => ctx.state(*at)?.fixed_market(pool)?.price,
            Expr::PositionDebt { pool, at } => ctx.state(*at)?.lending(pool)?.open_debt(ctx.trader),
        };
        Ok(v)
    }
}

/// States visible to an expression while a chain is being evaluated.
pub(crate) struct Context<'a> {
    pub params: &'a [f64],
    pub trader: &'a EntityId,
    /// `S_0 ..= S_{i-1}` for a binding in step `i`, or all states for the objective.
    pub states: &'a [WorldState],
    pub current: &'a WorldState,
    pub finished: bool,
}

impl Context<'_> {
    fn state(&self, at: StateRef) -> Result<&WorldState, VectorError> {
        match at {
            StateRef::Current => Ok(self.current),
            StateRef::Initial => Ok(&self.states[0]),
            StateRef::Final if self.finished => Ok(self.current),
            StateRef::Final => Err(VectorError::Invalid(
                "the final state is not available inside a step".into(),
            )),
            StateRef::Step(j) => self
                .states
                .get(j)
                .ok_or_else(|| VectorError::Invalid(format!("state S_{j} is not available yet"))),
        }
    }
}
