//! The pump-attack-and-arbitrage and oracle-manipulation vectors, with their
//! algebraic closed forms.

use serde::{Deserialize, Serialize};

use super::{
    ActionStep, AttackVector, Call, ConstraintSource, ConstraintSpec, Expr, ParamSpec, StateRef,
    VectorError,
};
use crate::models::{AssetId, EntityId, InterestModel, PoolId, ResidualKind, Venue, WorldState};
use crate::scenario::Scenario;

/// Bound on the exponent `lr * kX` reachable by any parameter in the box.
pub const EXP_GUARD: f64 = 50.0;

/// Price used to value sUSD collateral in the oracle vector's borrow step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceSource {
    /// `P_Y(M; S_2)`, the AMM spot price after the first swap.
    #[default]
    AmmSpot,
    /// `min(P_Y(M; S_2), P_Y(R; S_3))`: the lender reads both venues and keeps
    /// the lower collateral value.
    MinOfAmmAndReserve,
}

/// Treatment of the lending pool's `zY` in the oracle vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorrowCapMode {
    /// `zY - borrow >= 0` is a constraint.
    #[default]
    Residual,
    /// The constraint is dropped.
    Ignore,
    /// The borrow is clamped to `min(borrow, zY)`.
    HardCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OracleOptions {
    pub price: PriceSource,
    pub borrow_cap: BorrowCapMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ClosedForm {
    PumpArbitrage {
        flash: PoolId,
        lending: PoolId,
        amm: PoolId,
        margin: PoolId,
        market: PoolId,
    },
    OracleManipulation {
        flash: PoolId,
        amm: PoolId,
        reserve: PoolId,
        market: PoolId,
        lending: PoolId,
        #[serde(default)]
        options: OracleOptions,
    },
}

fn find_pool(state: &WorldState, kind: &str) -> Result<PoolId, VectorError> {
    let mut ids = state
        .pools()
        .iter()
        .filter(|(_, p)| p.kind_name() == kind)
        .map(|(id, _)| id);
    match (ids.next(), ids.next()) {
        (Some(id), None) => Ok(id.clone()),
        (None, _) => Err(VectorError::Invalid(format!("scenario has no {kind} pool"))),
        (Some(_), Some(_)) => Err(VectorError::Invalid(format!(
            "scenario has more than one {kind} pool"
        ))),
    }
}

fn nonneg(i: usize, name: &str) -> ConstraintSpec {
    ConstraintSpec {
        description: format!("{name} >= 0"),
        linear: true,
        scale: 1.0,
        source: ConstraintSource::ParamNonNegative(i),
    }
}

fn residual(
    description: String,
    linear: bool,
    scale: f64,
    step: usize,
    kind: ResidualKind,
) -> ConstraintSpec {
    ConstraintSpec {
        description,
        linear,
        scale: scale.abs().max(1.0),
        source: ConstraintSource::Residual { step, kind },
    }
}

fn bal(asset: &AssetId, at: StateRef) -> Expr {
    Expr::Balance {
        asset: asset.clone(),
        at,
    }
}

/// Six-step pump attack and arbitrage over `(p1, p2)`: `p1` collateralized to
/// borrow `Y`, `p2` posted as margin for a leveraged short of `Y`.
pub fn build_paa_vector(scenario: &Scenario) -> Result<AttackVector, VectorError> {
    let state = &scenario.state;
    let flash = find_pool(state, "flash_loan")?;
    let lending = find_pool(state, "lending")?;
    let margin = find_pool(state, "margin")?;
    let market = find_pool(state, "fixed_price")?;
    let fp = state.flash_pool(&flash)?;
    let lp = state.lending(&lending)?;
    let mp = state.margin(&margin)?;
    let amm = match &mp.venue {
        Venue::Amm(id) => id.clone(),
        Venue::Emp(_) => {
            return Err(VectorError::Invalid(
                "margin platform must trade on an AMM".into(),
            ))
        }
    };
    let pool = state.amm(&amm)?;
    if lp.exchange_rate.is_none() {
        return Err(VectorError::Invalid(format!(
            "lending pool `{lending}` needs er"
        )));
    }
    let x = fp.asset.clone();
    let y = pool.asset_y.clone();
    if lp.collateral_asset != x || lp.debt_asset != y || mp.collateral_asset != x {
        return Err(VectorError::Invalid(
            "pools do not share the X/Y pair".into(),
        ));
    }
    let b0 = state.balance(&scenario.adversary, &x);
    let vx = fp.available;

    let p = |i| Expr::param(i);
    let steps = vec![
        ActionStep {
            name: format!("Loan ({flash})"),
            calls: vec![Call::FlashLoan {
                pool: flash.clone(),
                amount: Expr::sum([p(0), p(1)]),
            }],
        },
        ActionStep {
            name: format!("CollateralizedBorrow ({lending})"),
            calls: vec![Call::CollateralizedBorrow {
                pool: lending.clone(),
                collateral: p(0),
                exchange_rate: None,
                cap_to_available: false,
            }],
        },
        ActionStep {
            name: format!("MarginShort ({margin}) & SwapXforY ({amm})"),
            calls: vec![Call::MarginShort {
                pool: margin.clone(),
                collateral: p(1),
            }],
        },
        ActionStep {
            name: format!("SwapYforX ({amm})"),
            calls: vec![Call::AmmSwapYForX {
                pool: amm.clone(),
                amount: bal(&y, StateRef::Current),
            }],
        },
        ActionStep {
            name: format!("Repay ({flash})"),
            calls: vec![Call::FlashRepay {
                pool: flash.clone(),
                amount: Expr::sum([p(0), p(1)]),
            }],
        },
        ActionStep {
            name: format!("SellXforY ({market}) & CollateralizedRepay ({lending})"),
            calls: vec![
                Call::SellXForY {
                    pool: market.clone(),
                    amount: Expr::Mul(vec![
                        Expr::PositionDebt {
                            pool: lending.clone(),
                            at: StateRef::Current,
                        },
                        Expr::FixedPrice {
                            pool: market.clone(),
                            at: StateRef::Current,
                        },
                    ]),
                },
                Call::CollateralizedRepay {
                    pool: lending.clone(),
                },
            ],
        },
    ];

    let constraints = vec![
        nonneg(0, "p1"),
        nonneg(1, "p2"),
        residual(
            "vX - p1 - p2 >= 0".into(),
            true,
            vx,
            1,
            ResidualKind::LoanCapacity,
        ),
        residual(
            "zY - p1*cf/er >= 0".into(),
            true,
            lp.available_debt,
            2,
            ResidualKind::BorrowCapacity,
        ),
        residual(
            "wX + p2 - p2*leverage/ocr >= 0".into(),
            true,
            mp.available_x,
            3,
            ResidualKind::MarginLiquidity,
        ),
        residual(
            "B0 + uX(S0) + p2*leverage/ocr - uX(S4) - p1 - p2 >= 0".into(),
            false,
            b0 + pool.reserve_x,
            5,
            ResidualKind::RepayFunds,
        ),
    ];

    Ok(AttackVector {
        name: "paa".into(),
        trader: scenario.adversary.clone(),
        params: vec![
            ParamSpec {
                name: "p1".into(),
                lower: 0.0,
                upper: vx,
            },
            ParamSpec {
                name: "p2".into(),
                lower: 0.0,
                upper: vx,
            },
        ],
        steps,
        objective: Expr::sub(bal(&x, StateRef::Final), bal(&x, StateRef::Initial)),
        constraints,
        closed_form: Some(ClosedForm::PumpArbitrage {
            flash,
            lending,
            amm,
            margin,
            market,
        }),
    })
}

pub fn build_oracle_vector(scenario: &Scenario) -> Result<AttackVector, VectorError> {
    build_oracle_vector_with(scenario, OracleOptions::default())
}

/// Six-step oracle manipulation over `(p1, p2, p3)`: `X` swapped on the AMM,
/// converted on the price reserve and sold on the fixed-price market, with
/// all `Y` then collateralized to borrow `X`.
pub fn build_oracle_vector_with(
    scenario: &Scenario,
    options: OracleOptions,
) -> Result<AttackVector, VectorError> {
    let state = &scenario.state;
    let flash = find_pool(state, "flash_loan")?;
    let amm = find_pool(state, "constant_product")?;
    let reserve = find_pool(state, "price_reserve")?;
    let market = find_pool(state, "fixed_price")?;
    let lending = find_pool(state, "lending")?;
    let fp = state.flash_pool(&flash)?;
    let pool = state.amm(&amm)?;
    let r = state.reserve(&reserve)?;
    let m = state.fixed_market(&market)?;
    let lp = state.lending(&lending)?;
    let x = fp.asset.clone();
    let y = pool.asset_y.clone();
    if pool.asset_x != x || r.asset_x != x || m.asset_x != x || lp.debt_asset != x {
        return Err(VectorError::Invalid(
            "pools do not share the X asset".into(),
        ));
    }
    if r.asset_y != y || m.asset_y != y || lp.collateral_asset != y {
        return Err(VectorError::Invalid(
            "pools do not share the Y asset".into(),
        ));
    }
    let vx = fp.available;
    let p2_cap = (EXP_GUARD / r.liquidity_rate - r.inventory_x).max(0.0);

    let p = |i| Expr::param(i);
    let amm_price = Expr::AmmSpotPrice {
        pool: amm.clone(),
        at: StateRef::Step(2),
    };
    let price = match options.price {
        PriceSource::AmmSpot => amm_price,
        PriceSource::MinOfAmmAndReserve => Expr::Min(vec![
            amm_price,
            Expr::ReservePrice {
                pool: reserve.clone(),
                at: StateRef::Step(3),
            },
        ]),
    };
    let total = Expr::sum([p(0), p(1), p(2)]);
    let steps = vec![
        ActionStep {
            name: format!("Loan ({flash})"),
            calls: vec![Call::FlashLoan {
                pool: flash.clone(),
                amount: total.clone(),
            }],
        },
        ActionStep {
            name: format!("SwapXforY ({amm})"),
            calls: vec![Call::AmmSwapXForY {
                pool: amm.clone(),
                amount: p(0),
            }],
        },
        ActionStep {
            name: format!("ConvertXtoY ({reserve})"),
            calls: vec![Call::ReserveConvertXToY {
                pool: reserve.clone(),
                amount: p(1),
            }],
        },
        ActionStep {
            name: format!("SellXforY ({market})"),
            calls: vec![Call::SellXForY {
                pool: market.clone(),
                amount: p(2),
            }],
        },
        ActionStep {
            name: format!("CollateralizedBorrow ({lending})"),
            calls: vec![Call::CollateralizedBorrow {
                pool: lending.clone(),
                collateral: bal(&y, StateRef::Current),
                exchange_rate: Some(Expr::div(Expr::Const(1.0), price)),
                cap_to_available: options.borrow_cap == BorrowCapMode::HardCap,
            }],
        },
        ActionStep {
            name: format!("Repay ({flash})"),
            calls: vec![Call::FlashRepay {
                pool: flash.clone(),
                amount: total,
            }],
        },
    ];

    let mut constraints = vec![
        nonneg(0, "p1"),
        nonneg(1, "p2"),
        nonneg(2, "p3"),
        residual(
            "vX - p1 - p2 - p3 >= 0".into(),
            true,
            vx,
            1,
            ResidualKind::LoanCapacity,
        ),
        residual(
            "maxP - minP*exp(lr*(kX(S0) + p2)) >= 0".into(),
            false,
            r.max_price,
            3,
            ResidualKind::PriceCap,
        ),
        residual(
            "maxY - p3/pm >= 0".into(),
            true,
            m.max_y.unwrap_or(1.0),
            4,
            ResidualKind::SupplyCap,
        ),
    ];
    if m.max_y.is_none() {
        constraints.pop();
    }
    if options.borrow_cap != BorrowCapMode::Ignore {
        constraints.push(residual(
            "zY - B(A;Y;S4)*cf*P_Y(M;S2) >= 0".into(),
            false,
            lp.available_debt,
            5,
            ResidualKind::BorrowCapacity,
        ));
    }

    Ok(AttackVector {
        name: "oracle".into(),
        trader: scenario.adversary.clone(),
        params: vec![
            ParamSpec {
                name: "p1".into(),
                lower: 0.0,
                upper: vx,
            },
            ParamSpec {
                name: "p2".into(),
                lower: 0.0,
                upper: vx.min(p2_cap),
            },
            ParamSpec {
                name: "p3".into(),
                lower: 0.0,
                upper: vx,
            },
        ],
        steps,
        objective: Expr::sub(bal(&x, StateRef::Final), bal(&x, StateRef::Initial)),
        constraints,
        closed_form: Some(ClosedForm::OracleManipulation {
            flash,
            amm,
            reserve,
            market,
            lending,
            options,
        }),
    })
}

fn quote(input: f64, reserve_in: f64, reserve_out: f64, fee: f64) -> f64 {
    let effective = input * (1.0 - fee);
    effective * reserve_out / (reserve_in + effective)
}

#[derive(Debug, Clone)]
enum Model {
    Paa {
        b0: f64,
        y0: f64,
        vx: f64,
        interest: InterestModel,
        cf: f64,
        er: f64,
        zy: f64,
        ux: f64,
        uy: f64,
        fee: f64,
        leverage: f64,
        ocr: f64,
        wx: f64,
        pm: f64,
    },
    Oracle {
        b0: f64,
        y0: f64,
        vx: f64,
        interest: InterestModel,
        ux: f64,
        uy: f64,
        fee: f64,
        lr: f64,
        min_p: f64,
        max_p: f64,
        k0: f64,
        pm: f64,
        max_y: Option<f64>,
        sold: f64,
        cf: f64,
        zy: f64,
        options: OracleOptions,
    },
}

const PAA_SLOTS: [(usize, ResidualKind); 4] = [
    (1, ResidualKind::LoanCapacity),
    (2, ResidualKind::BorrowCapacity),
    (3, ResidualKind::MarginLiquidity),
    (5, ResidualKind::RepayFunds),
];

const ORACLE_SLOTS: [(usize, ResidualKind); 6] = [
    (1, ResidualKind::LoanCapacity),
    (3, ResidualKind::PriceFloor),
    (3, ResidualKind::PriceCap),
    (4, ResidualKind::SupplyCap),
    (5, ResidualKind::BorrowCapacity),
    (6, ResidualKind::RepayFunds),
];

#[derive(Debug, Clone, Copy)]
enum Slot {
    Param(usize),
    Residual(usize),
}

/// A closed form bound to concrete pool values, with the vector's constraint
/// list mapped onto its residual table.
#[derive(Debug, Clone)]
pub struct CompiledClosedForm {
    model: Model,
    slots: Vec<Slot>,
    n_params: usize,
}

impl ClosedForm {
    pub fn compile(
        &self,
        vector: &AttackVector,
        state: &WorldState,
    ) -> Result<CompiledClosedForm, VectorError> {
        let trader: &EntityId = &vector.trader;
        let (model, table): (Model, &[(usize, ResidualKind)]) = match self {
            ClosedForm::PumpArbitrage {
                flash,
                lending,
                amm,
                margin,
                market,
            } => {
                let fp = state.flash_pool(flash)?;
                let lp = state.lending(lending)?;
                let pool = state.amm(amm)?;
                let mp = state.margin(margin)?;
                let m = state.fixed_market(market)?;
                let er = lp.exchange_rate.ok_or_else(|| {
                    VectorError::Invalid(format!("lending pool `{lending}` needs er"))
                })?;
                (
                    Model::Paa {
                        b0: state.balance(trader, &fp.asset),
                        y0: state.balance(trader, &pool.asset_y),
                        vx: fp.available,
                        interest: fp.interest,
                        cf: lp.collateral_factor,
                        er,
                        zy: lp.available_debt,
                        ux: pool.reserve_x,
                        uy: pool.reserve_y,
                        fee: pool.fee,
                        leverage: mp.leverage,
                        ocr: mp.ocr,
                        wx: mp.available_x,
                        pm: m.price,
                    },
                    &PAA_SLOTS,
                )
            }
            ClosedForm::OracleManipulation {
                flash,
                amm,
                reserve,
                market,
                lending,
                options,
            } => {
                let fp = state.flash_pool(flash)?;
                let pool = state.amm(amm)?;
                let r = state.reserve(reserve)?;
                let m = state.fixed_market(market)?;
                let lp = state.lending(lending)?;
                (
                    Model::Oracle {
                        b0: state.balance(trader, &fp.asset),
                        y0: state.balance(trader, &pool.asset_y),
                        vx: fp.available,
                        interest: fp.interest,
                        ux: pool.reserve_x,
                        uy: pool.reserve_y,
                        fee: pool.fee,
                        lr: r.liquidity_rate,
                        min_p: r.min_price,
                        max_p: r.max_price,
                        k0: r.inventory_x,
                        pm: m.price,
                        max_y: m.max_y,
                        sold: m.sold_y,
                        cf: lp.collateral_factor,
                        zy: lp.available_debt,
                        options: *options,
                    },
                    &ORACLE_SLOTS,
                )
            }
        };
        let mut slots = Vec::with_capacity(vector.constraints.len());
        for c in &vector.constraints {
            let slot = match &c.source {
                ConstraintSource::ParamNonNegative(i) => Slot::Param(*i),
                ConstraintSource::Residual { step, kind } => {
                    let i = table
                        .iter()
                        .position(|(s, k)| s == step && k == kind)
                        .ok_or_else(|| {
                            VectorError::Invalid(format!(
                                "closed form has no {kind} residual at step {step}"
                            ))
                        })?;
                    Slot::Residual(i)
                }
                ConstraintSource::Expr(_) => {
                    return Err(VectorError::Invalid(
                        "closed forms cannot evaluate expression constraints".into(),
                    ))
                }
            };
            slots.push(slot);
        }
        Ok(CompiledClosedForm {
            model,
            slots,
            n_params: vector.n_params(),
        })
    }
}

impl CompiledClosedForm {
    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn n_constraints(&self) -> usize {
        self.slots.len()
    }

    /// Writes the vector's constraint values into `constraints` and returns
    /// the objective.
    pub fn evaluate(&self, params: &[f64], constraints: &mut [f64]) -> f64 {
        let mut table = [0.0; 6];
        let objective = match self.model {
            Model::Paa {
                b0,
                y0,
                vx,
                interest,
                cf,
                er,
                zy,
                ux,
                uy,
                fee,
                leverage,
                ocr,
                wx,
                pm,
            } => {
                let (p1, p2) = (params[0], params[1]);
                let borrowed = p1 * cf / er;
                let levered = p2 * leverage / ocr;
                let locked = quote(levered, ux, uy, fee);
                let (ux3, uy3) = (ux + levered, uy - locked);
                let dumped = quote(y0 + borrowed, uy3, ux3, fee);
                let due = (p1 + p2) + interest.interest(p1 + p2);
                table[0] = vx - (p1 + p2);
                table[1] = zy - borrowed;
                table[2] = wx + p2 - levered;
                table[3] = b0 + dumped - due;
                dumped - p2 - interest.interest(p1 + p2) - borrowed * pm
            }
            Model::Oracle {
                b0,
                y0,
                vx,
                interest,
                ux,
                uy,
                fee,
                lr,
                min_p,
                max_p,
                k0,
                pm,
                max_y,
                sold,
                cf,
                zy,
                options,
            } => {
                let (p1, p2, p3) = (params[0], params[1], params[2]);
                let total = p1 + p2 + p3;
                let swapped = quote(p1, ux, uy, fee);
                let amm_price = (ux + p1) / (uy - swapped);
                let reserve_price = min_p * (lr * k0).exp();
                let converted = -(-lr * p2).exp_m1() / (lr * reserve_price);
                let price_after = min_p * (lr * (k0 + p2)).exp();
                let bought = p3 / pm;
                let collateral = y0 + swapped + converted + bought;
                let price = match options.price {
                    PriceSource::AmmSpot => amm_price,
                    PriceSource::MinOfAmmAndReserve => amm_price.min(price_after),
                };
                let mut borrowed = collateral * cf / (1.0 / price);
                if options.borrow_cap == BorrowCapMode::HardCap {
                    borrowed = borrowed.min(zy.max(0.0));
                }
                let interest = interest.interest(total);
                table[0] = vx - total;
                table[1] = price_after - min_p;
                table[2] = max_p - price_after;
                table[3] = max_y.map_or(f64::INFINITY, |cap| cap - sold - bought);
                table[4] = zy - borrowed;
                table[5] = b0 + borrowed - total - interest;
                borrowed - total - interest
            }
        };
        for (out, slot) in constraints.iter_mut().zip(&self.slots) {
            *out = match *slot {
                Slot::Param(i) => params[i],
                Slot::Residual(i) => table[i],
            };
        }
        objective
    }
}
