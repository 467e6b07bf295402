//! Constrained maximization of attack-vector objectives.
//!
//! [`solve`] runs sequential quadratic programming from several Latin
//! hypercube starts over the parameter box and keeps the best feasible point.
//! [`grid_oracle`] is an exhaustive scan used to certify its answers on
//! problems with at most three parameters.

mod grid;
mod sqp;


use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::WorldState;
use crate::vector::{evaluate, AttackVector, CompiledClosedForm, VectorError};

pub use grid::grid_oracle;

#[derive(Debug, Error)]
pub enum OptError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("parameter {coordinate} must lie at least one step inside its bounds")]
    NotInterior { coordinate: usize },
    #[error("evaluation failed{}: {source}", coordinate.map(|c| format!(" at coordinate {c}")).unwrap_or_default())]
    Evaluation {
        coordinate: Option<usize>,
        source: VectorError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Convergence tolerance on the step and on the merit function.
    pub tolerance: f64,
    /// Scaled residuals above `-feasibility_tolerance` count as satisfied.
    pub feasibility_tolerance: f64,
    /// Finite-difference step in parameter units.
    pub fd_step: f64,
    pub starts: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-9,
            feasibility_tolerance: 1e-6,
            fd_step: 1e-4,
            starts: 16,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), OptError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.tolerance) || !positive(self.feasibility_tolerance) {
            return Err(OptError::Config("tolerances must be > 0".into()));
        }
        if !positive(self.fd_step) {
            return Err(OptError::Config("fd step must be > 0".into()));
        }
        if self.starts == 0 || self.max_iterations == 0 {
            return Err(OptError::Config(
                "starts and max iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Maximize `objective(x)` subject to `g(x) >= 0` inside box bounds.
pub trait Problem: Sync {
    fn n_params(&self) -> usize;
    fn n_constraints(&self) -> usize;
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    /// Positive divisors applied to each constraint before comparing with tolerances.
    fn constraint_scales(&self) -> Vec<f64> {
        vec![1.0; self.n_constraints()]
    }
    /// Returns the objective and writes every constraint value.
    fn evaluate(&self, x: &[f64], constraints: &mut [f64]) -> Result<f64, VectorError>;
}

/// An attack vector over a fixed initial state. Uses the vector's closed form
/// when it has one and the step-by-step trace otherwise.
pub struct VectorProblem<'a> {
    vector: &'a AttackVector,
    state: &'a WorldState,
    closed: Option<CompiledClosedForm>,
}

impl<'a> VectorProblem<'a> {
    pub fn new(vector: &'a AttackVector, state: &'a WorldState) -> Result<Self, VectorError> {
        vector.validate(state)?;
        let closed = vector
            .closed_form
            .as_ref()
            .map(|c| c.compile(vector, state))
            .transpose()?;
        Ok(Self {
            vector,
            state,
            closed,
        })
    }

    /// Forces evaluation through the trace even if a closed form exists.
    pub fn trace_only(
        vector: &'a AttackVector,
        state: &'a WorldState,
    ) -> Result<Self, VectorError> {
        vector.validate(state)?;
        Ok(Self {
            vector,
            state,
            closed: None,
        })
    }

    pub fn uses_closed_form(&self) -> bool {
        self.closed.is_some()
    }
}

impl Problem for VectorProblem<'_> {
    fn n_params(&self) -> usize {
        self.vector.n_params()
    }

    fn n_constraints(&self) -> usize {
        self.vector.constraints.len()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.vector.bounds()
    }

    fn constraint_scales(&self) -> Vec<f64> {
        self.vector.constraints.iter().map(|c| c.scale).collect()
    }

    fn evaluate(&self, x: &[f64], constraints: &mut [f64]) -> Result<f64, VectorError> {
        match &self.closed {
            Some(c) => Ok(c.evaluate(x, constraints)),
            None => {
                let t = evaluate(self.vector, self.state, x)?;
                constraints.copy_from_slice(&t.constraints);
                Ok(t.objective)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub method: String,
    pub best_params: Vec<f64>,
    pub best_objective: f64,
    /// Unscaled constraint values at `best_params`.
    pub constraints: Vec<f64>,
    /// `min_j g_j / scale_j`; negative means violated.
    pub worst_residual: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub starts_tried: usize,
    pub starts_feasible: usize,
    /// Starts that fell back to the augmented Lagrangian.
    pub fallback_starts: usize,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Maps the unit box onto the problem's bounds and flips the objective into
/// a scaled minimization.
struct Normalized<'a, P: Problem + ?Sized> {
    problem: &'a P,
    lower: Vec<f64>,
    width: Vec<f64>,
    scales: Vec<f64>,
    objective_scale: f64,
}

impl<P: Problem + ?Sized> Normalized<'_, P> {
    fn to_params(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.lower)
            .zip(&self.width)
            .map(|((z, l), w)| l + z * w)
            .collect()
    }
}

impl<P: Problem + ?Sized> sqp::Scaled for Normalized<'_, P> {
    fn n(&self) -> usize {
        self.lower.len()
    }

    fn m(&self) -> usize {
        self.scales.len()
    }

    fn eval(&self, z: &[f64], c: &mut [f64]) -> Result<f64, VectorError> {
        let x = self.to_params(z);
        let o = self.problem.evaluate(&x, c)?;
        for (v, s) in c.iter_mut().zip(&self.scales) {
            *v /= s;
        }
        Ok(-o / self.objective_scale)
    }
}

/// `k` points of a Latin hypercube in `[0, 1]^n`.
pub fn latin_hypercube(n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![vec![0.0; n]; k];
    for d in 0..n {
        let mut strata: Vec<usize> = (0..k).collect();
        strata.shuffle(&mut rng);
        for (point, s) in points.iter_mut().zip(strata) {
            point[d] = (s as f64 + rng.random::<f64>()) / k as f64;
        }
    }
    points
}

fn check_bounds(lower: &[f64], upper: &[f64]) -> Result<(), OptError> {
    if lower.is_empty() {
        return Err(OptError::Unsupported(
            "the problem has no free parameters".into(),
        ));
    }
    if lower
        .iter()
        .zip(upper)
        .any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u))
    {
        return Err(OptError::Config(
            "bounds must be finite with lower <= upper".into(),
        ));
    }
    Ok(())
}

struct StartOutcome {
    x: Vec<f64>,
    objective: f64,
    constraints: Vec<f64>,
    worst: f64,
    iterations: usize,
    fallback: bool,
}

/// Best feasible point over `config.starts` SQP runs. Starts run in parallel
/// and are merged in start order, so the result does not depend on scheduling.
pub fn solve<P: Problem + ?Sized>(
    problem: &P,
    config: &SolverConfig,
) -> Result<OptimizationResult, OptError> {
    config.validate()?;
    let started = Instant::now();
    let (lower, upper) = problem.bounds();
    check_bounds(&lower, &upper)?;
    let n = lower.len();
    let m = problem.n_constraints();
    let width: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| u - l).collect();
    let scales = problem.constraint_scales();
    if scales.len() != m || scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(OptError::Config(
            "constraint scales must be positive".into(),
        ));
    }

    let starts = latin_hypercube(n, config.starts, config.seed);
    let mut g = vec![0.0; m];
    let mut objective_scale: f64 = 1.0;
    for z in &starts {
        let x: Vec<f64> = z
            .iter()
            .zip(&lower)
            .zip(&width)
            .map(|((z, l), w)| l + z * w)
            .collect();
        if let Ok(o) = problem.evaluate(&x, &mut g) {
            if o.is_finite() {
                objective_scale = objective_scale.max(o.abs());
            }
        }
    }
    let scaled = Normalized {
        problem,
        lower,
        width: width.clone(),
        scales,
        objective_scale,
    };
    let settings = sqp::Settings {
        max_iterations: config.max_iterations,
        tolerance: config.tolerance,
        feasibility_tolerance: config.feasibility_tolerance,
        steps: width
            .iter()
            .map(|w| if *w > 0.0 { config.fd_step / w } else { 1e-8 })
            .collect(),
    };

    let run = |z0: &Vec<f64>| -> Option<StartOutcome> {
        let (local, fallback) = match sqp::sqp(&scaled, z0, &settings) {
            Ok(l) => (l, false),
            Err(sqp::Failure::QpInfeasible) => (
                sqp::augmented_lagrangian(&scaled, z0, &settings).ok()?,
                true,
            ),
            Err(sqp::Failure::Eval(_)) => return None,
        };
        let x = scaled.to_params(&local.z);
        let mut constraints = vec![0.0; m];
        let objective = problem.evaluate(&x, &mut constraints).ok()?;
        Some(StartOutcome {
            x,
            objective,
            constraints,
            worst: sqp::worst(&local.c),
            iterations: local.iterations,
            fallback,
        })
    };
    let outcomes: Vec<Option<StartOutcome>> = starts.par_iter().map(run).collect();

    let tol = config.feasibility_tolerance;
    let mut best: Option<&StartOutcome> = None;
    for o in outcomes.iter().flatten() {
        best = match best {
            None => Some(o),
            Some(b) => {
                let (bf, of) = (b.worst >= -tol, o.worst >= -tol);
                let better = match (of, bf) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => o.objective > b.objective,
                    (false, false) => o.worst > b.worst,
                };
                Some(if better { o } else { b })
            }
        };
    }
    let best = best.ok_or_else(|| OptError::Evaluation {
        coordinate: None,
        source: VectorError::Invalid("every start failed to evaluate".into()),
    })?;
    Ok(OptimizationResult {
        method: "sqp".into(),
        best_params: best.x.clone(),
        best_objective: best.objective,
        constraints: best.constraints.clone(),
        worst_residual: best.worst,
        feasible: best.worst >= -tol,
        iterations: outcomes.iter().flatten().map(|o| o.iterations).sum(),
        starts_tried: starts.len(),
        starts_feasible: outcomes
            .iter()
            .flatten()
            .filter(|o| o.worst >= -tol)
            .count(),
        fallback_starts: outcomes.iter().flatten().filter(|o| o.fallback).count(),
        wall_time: started.elapsed(),
    })
}

/// Central-difference gradient of the objective in parameter units.
pub fn finite_diff_gradient<P: Problem + ?Sized>(
    problem: &P,
    params: &[f64],
    step: f64,
) -> Result<Vec<f64>, OptError> {
    let (lower, upper) = problem.bounds();
    if params.len() != lower.len() {
        return Err(OptError::Evaluation {
            coordinate: None,
            source: VectorError::ParamCount {
                expected: lower.len(),
                got: params.len(),
            },
        });
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(OptError::Config("fd step must be > 0".into()));
    }
    let mut g = vec![0.0; problem.n_constraints()];
    let mut x = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        if params[i] - step < lower[i] || params[i] + step > upper[i] {
            return Err(OptError::NotInterior { coordinate: i });
        }
        let eval = |x: &[f64], g: &mut [f64]| {
            problem
                .evaluate(x, g)
                .map_err(|source| OptError::Evaluation {
                    coordinate: Some(i),
                    source,
                })
        };
        x[i] = params[i] + step;
        let fp = eval(&x, &mut g)?;
        x[i] = params[i] - step;
        let fm = eval(&x, &mut g)?;
        x[i] = params[i];
        grad.push((fp - fm) / (2.0 * step));
    }
    Ok(grad)
}

/// Indices of constraints whose scaled value at the result lies within
/// `tolerance` of zero.
pub fn binding_constraints<P: Problem + ?Sized>(
    problem: &P,
    result: &OptimizationResult,
    tolerance: f64,
) -> Vec<usize> {
    result
        .constraints
        .iter()
        .zip(problem.constraint_scales())
        .enumerate()
        .filter(|(_, (g, s))| (*g / s).abs() <= tolerance)
        .map(|(j, _)| j)
        .collect()
}
