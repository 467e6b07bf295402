use serde::Serialize;

use super::expr::Context;
use super::{AttackVector, Call, ConstraintSource, VectorError};
use crate::models::{
    self, BorrowOptions, ModelError, ResidualKind, Transition, WorldState, STRICT_TOLERANCE,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceResidual {
    /// 1-based step index.
    pub step: usize,
    /// Position of the call inside its step.
    pub call: usize,
    pub kind: ResidualKind,
    pub value: f64,
}

/// `S_0 ..= S_N`, every residual with its provenance, the values of the
/// vector's declared constraints and the objective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationTrace {
    pub states: Vec<WorldState>,
    pub residuals: Vec<TraceResidual>,
    pub constraints: Vec<f64>,
    pub objective: f64,
}

impl EvaluationTrace {
    pub fn final_state(&self) -> &WorldState {
        self.states.last().expect("trace holds S_0")
    }

    /// Most negative declared constraint value, or `+inf` when there are none.
    pub fn min_constraint(&self) -> f64 {
        self.constraints
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Applies every step in order. Negative residuals never abort the chain;
/// only configuration problems and non-finite values do.
pub fn evaluate(
    vector: &AttackVector,
    initial: &WorldState,
    params: &[f64],
) -> Result<EvaluationTrace, VectorError> {
    if params.len() != vector.n_params() {
        return Err(VectorError::ParamCount {
            expected: vector.n_params(),
            got: params.len(),
        });
    }
    if let Some((index, &value)) = params.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(VectorError::NonFiniteParam { index, value });
    }

    let trader = &vector.trader;
    let mut states = Vec::with_capacity(vector.steps.len() + 1);
    let mut s0 = initial.clone();
    s0.set_step_index(0);
    states.push(s0);
    let mut residuals = Vec::new();

    for (k, step) in vector.steps.iter().enumerate() {
        let index = k + 1;
        let wrap = |source: ModelError| VectorError::Step {
            step: index,
            name: step.name.clone(),
            source,
        };
        let mut current = states[k].clone();
        for (c, call) in step.calls.iter().enumerate() {
            let ctx = Context {
                params,
                trader,
                states: &states,
                current: &current,
                finished: false,
            };
            let t = apply(call, &ctx).map_err(|e| match e {
                VectorError::Model(m) => wrap(m),
                other => other,
            })?;
            residuals.extend(t.residuals.iter().map(|r| TraceResidual {
                step: index,
                call: c,
                kind: r.kind,
                value: r.value,
            }));
            current = t.state;
        }
        current.set_step_index(index);
        states.push(current);
    }

    let last = states.last().expect("trace holds S_0");
    let ctx = Context {
        params,
        trader,
        states: &states,
        current: last,
        finished: true,
    };
    let objective = vector.objective.eval(&ctx)?;
    if !objective.is_finite() {
        return Err(VectorError::Invalid(format!(
            "objective evaluated to {objective}"
        )));
    }
    let mut constraints = Vec::with_capacity(vector.constraints.len());
    for spec in &vector.constraints {
        let v = match &spec.source {
            ConstraintSource::ParamNonNegative(i) => params[*i],
            ConstraintSource::Residual { step, kind } => residuals
                .iter()
                .filter(|r| r.step == *step && r.kind == *kind)
                .map(|r| r.value)
                .reduce(f64::min)
                .ok_or_else(|| {
                    VectorError::Invalid(format!("step {step} reports no {kind} residual"))
                })?,
            ConstraintSource::Expr(e) => e.eval(&ctx)?,
        };
        constraints.push(v);
    }
    Ok(EvaluationTrace {
        states,
        residuals,
        constraints,
        objective,
    })
}

/// [`evaluate`], failing on the first residual below `-1e-9`.
pub fn evaluate_strict(
    vector: &AttackVector,
    initial: &WorldState,
    params: &[f64],
) -> Result<EvaluationTrace, VectorError> {
    let trace = evaluate(vector, initial, params)?;
    if let Some(r) = trace.residuals.iter().find(|r| r.value < -STRICT_TOLERANCE) {
        return Err(VectorError::Strict {
            step: r.step,
            name: vector.steps[r.step - 1].name.clone(),
            kind: r.kind,
            value: r.value,
        });
    }
    Ok(trace)
}

fn apply(call: &Call, ctx: &Context<'_>) -> Result<Transition, VectorError> {
    let s = ctx.current;
    let who = ctx.trader;
    let t = match call {
        Call::FlashLoan { pool, amount } => models::flash_loan(s, pool, who, amount.eval(ctx)?)?,
        Call::FlashRepay { pool, amount } => models::flash_repay(s, pool, who, amount.eval(ctx)?)?,
        Call::SellXForY { pool, amount } => models::sell_x_for_y(s, pool, who, amount.eval(ctx)?)?,
        Call::AmmSwapXForY { pool, amount } => {
            models::amm_swap_x_for_y(s, pool, who, amount.eval(ctx)?)?
        }
        Call::AmmSwapYForX { pool, amount } => {
            models::amm_swap_y_for_x(s, pool, who, amount.eval(ctx)?)?
        }
        Call::ReserveConvertXToY { pool, amount } => {
            models::reserve_convert_x_to_y(s, pool, who, amount.eval(ctx)?)?
        }
        Call::CollateralizedBorrow {
            pool,
            collateral,
            exchange_rate,
            cap_to_available,
        } => {
            let options = BorrowOptions {
                exchange_rate: exchange_rate.as_ref().map(|e| e.eval(ctx)).transpose()?,
                cap_to_available: *cap_to_available,
            };
            models::collateralized_borrow_with(s, pool, who, collateral.eval(ctx)?, options)?
        }
        Call::CollateralizedRepay { pool } => models::collateralized_repay(s, pool, who)?,
        Call::MarginShort { pool, collateral } => {
            models::margin_short(s, pool, who, collateral.eval(ctx)?)?
        }
    };
    Ok(t)
}
