//! Attack vectors: ordered chains of endpoint calls with free parameters.
//!
//! A vector is evaluated by threading a [`WorldState`] through its steps,
//! collecting every residual on the way and finally computing the objective
//! from the initial and final states. The two built-in vectors also carry an
//! algebraic closed form of the same chain, which the optimizer uses for speed
//! and which is cross-checked against the step-by-step trace.

mod builtin;
mod eval;
mod expr;


use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{EntityId, ModelError, PoolId, ResidualKind, WorldState};

pub use builtin::{
    build_oracle_vector, build_oracle_vector_with, build_paa_vector, BorrowCapMode, ClosedForm,
    CompiledClosedForm, OracleOptions, PriceSource, EXP_GUARD,
};
pub use eval::{evaluate, evaluate_strict, EvaluationTrace, TraceResidual};
pub use expr::{Expr, StateRef};

#[derive(Debug, Error)]
pub enum VectorError {
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("parameter {index} is not finite ({value})")]
    NonFiniteParam { index: usize, value: f64 },
    #[error("step {step} ({name}): {source}")]
    Step {
        step: usize,
        name: String,
        source: ModelError,
    },
    #[error("step {step} ({name}): residual {kind} = {value} violates strict mode")]
    Strict {
        step: usize,
        name: String,
        kind: ResidualKind,
        value: f64,
    },
    #[error("invalid vector: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// One endpoint invocation with its amount bindings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Call {
    FlashLoan {
        pool: PoolId,
        amount: Expr,
    },
    FlashRepay {
        pool: PoolId,
        amount: Expr,
    },
    SellXForY {
        pool: PoolId,
        amount: Expr,
    },
    AmmSwapXForY {
        pool: PoolId,
        amount: Expr,
    },
    AmmSwapYForX {
        pool: PoolId,
        amount: Expr,
    },
    ReserveConvertXToY {
        pool: PoolId,
        amount: Expr,
    },
    CollateralizedBorrow {
        pool: PoolId,
        collateral: Expr,
        /// Collateral units per debt unit; defaults to the pool's `er`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exchange_rate: Option<Expr>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        cap_to_available: bool,
    },
    CollateralizedRepay {
        pool: PoolId,
    },
    MarginShort {
        pool: PoolId,
        collateral: Expr,
    },
}

impl Call {
    pub fn pool(&self) -> &PoolId {
        match self {
            Call::FlashLoan { pool, .. }
            | Call::FlashRepay { pool, .. }
            | Call::SellXForY { pool, .. }
            | Call::AmmSwapXForY { pool, .. }
            | Call::AmmSwapYForX { pool, .. }
            | Call::ReserveConvertXToY { pool, .. }
            | Call::CollateralizedBorrow { pool, .. }
            | Call::CollateralizedRepay { pool }
            | Call::MarginShort { pool, .. } => pool,
        }
    }

    pub(crate) fn exprs(&self) -> Vec<&Expr> {
        match self {
            Call::FlashLoan { amount, .. }
            | Call::FlashRepay { amount, .. }
            | Call::SellXForY { amount, .. }
            | Call::AmmSwapXForY { amount, .. }
            | Call::AmmSwapYForX { amount, .. }
            | Call::ReserveConvertXToY { amount, .. } => vec![amount],
            Call::CollateralizedBorrow {
                collateral,
                exchange_rate,
                ..
            } => {
                let mut v = vec![collateral];
                v.extend(exchange_rate.as_ref());
                v
            }
            Call::CollateralizedRepay { .. } => vec![],
            Call::MarginShort { collateral, .. } => vec![collateral],
        }
    }
}

/// A step `T_i` of the chain; several calls may share one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionStep {
    pub name: String,
    pub calls: Vec<Call>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintSource {
    /// `p_i >= 0`.
    ParamNonNegative(usize),
    /// A residual reported by step `step` (1-based).
    Residual { step: usize, kind: ResidualKind },
    /// An expression evaluated on the finished chain.
    Expr(Expr),
}

/// One entry of the accumulated constraint set `g(p) >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub description: String,
    pub linear: bool,
    /// Divisor applied by the optimizer, `max(1, |constant term|)`.
    #[serde(default = "one")]
    pub scale: f64,
    pub source: ConstraintSource,
}

fn one() -> f64 {
    1.0
}

impl ConstraintSpec {
    pub fn step(&self) -> Option<usize> {
        match self.source {
            ConstraintSource::Residual { step, .. } => Some(step),
            ConstraintSource::ParamNonNegative(_) => Some(1),
            ConstraintSource::Expr(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackVector {
    pub name: String,
    pub trader: EntityId,
    pub params: Vec<ParamSpec>,
    pub steps: Vec<ActionStep>,
    pub objective: Expr,
    pub constraints: Vec<ConstraintSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<ClosedForm>,
}

/// Row of [`list_constraints`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintDescriptor {
    pub index: usize,
    pub description: String,
    pub step: Option<usize>,
    pub linear: bool,
}

impl AttackVector {
    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.params.iter().map(|p| (p.lower, p.upper)).unzip()
    }

    pub fn from_json(text: &str) -> Result<Self, VectorError> {
        serde_json::from_str(text).map_err(|e| VectorError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VectorError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| VectorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vector serializes")
    }

    /// Structural checks against `state`: parameter indices, state references,
    /// referenced pools and bounds.
    pub fn validate(&self, state: &WorldState) -> Result<(), VectorError> {
        let n = self.n_params();
        let bad = |m: String| Err(VectorError::Invalid(m));
        for (i, p) in self.params.iter().enumerate() {
            if !(p.lower.is_finite() && p.upper.is_finite() && p.lower <= p.upper) {
                return bad(format!("parameter {i} ({}) has invalid bounds", p.name));
            }
        }
        let check_expr = |e: &Expr, step: Option<usize>| -> Result<(), VectorError> {
            let mut ps = Vec::new();
            e.params(&mut ps);
            if let Some(i) = ps.into_iter().find(|i| *i >= n) {
                return Err(VectorError::Invalid(format!("parameter index {i} >= {n}")));
            }
            let mut refs = Vec::new();
            e.state_refs(&mut refs);
            for r in refs {
                match (r, step) {
                    (StateRef::Step(j), Some(i)) if j >= i => {
                        return Err(VectorError::Invalid(format!(
                            "step {i} reads S_{j}; only earlier states are visible"
                        )))
                    }
                    (StateRef::Step(j), None) if j > self.steps.len() => {
                        return Err(VectorError::Invalid(format!("S_{j} does not exist")))
                    }
                    (StateRef::Final, Some(i)) => {
                        return Err(VectorError::Invalid(format!(
                            "step {i} reads the final state"
                        )))
                    }
                    _ => {}
                }
            }
            let mut pools = Vec::new();
            e.pools(&mut pools);
            for p in pools {
                state.pool(&p)?;
            }
            Ok(())
        };
        for (k, step) in self.steps.iter().enumerate() {
            if step.calls.is_empty() {
                return bad(format!("step {} ({}) has no calls", k + 1, step.name));
            }
            for call in &step.calls {
                state.pool(call.pool())?;
                for e in call.exprs() {
                    check_expr(e, Some(k + 1))?;
                }
            }
        }
        check_expr(&self.objective, None)?;
        for c in &self.constraints {
            if !(c.scale.is_finite() && c.scale > 0.0) {
                return bad(format!(
                    "constraint `{}` has a non-positive scale",
                    c.description
                ));
            }
            match &c.source {
                ConstraintSource::ParamNonNegative(i) if *i >= n => {
                    return bad(format!(
                        "constraint `{}` names parameter {i}",
                        c.description
                    ))
                }
                ConstraintSource::Residual { step, .. }
                    if *step == 0 || *step > self.steps.len() =>
                {
                    return bad(format!("constraint `{}` names step {step}", c.description))
                }
                ConstraintSource::Expr(e) => check_expr(e, None)?,
                _ => {}
            }
        }
        Ok(())
    }
}

pub fn list_constraints(vector: &AttackVector) -> Vec<ConstraintDescriptor> {
    vector
        .constraints
        .iter()
        .enumerate()
        .map(|(index, c)| ConstraintDescriptor {
            index,
            description: c.description.clone(),
            step: c.step(),
            linear: c.linear,
        })
        .collect()
}
