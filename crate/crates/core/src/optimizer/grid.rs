use std::time::Instant;

use rayon::prelude::*;

use super::{check_bounds, OptError, OptimizationResult, Problem};

const MAX_DIMENSIONS: usize = 3;

struct Cell {
    x: Vec<f64>,
    objective: f64,
    constraints: Vec<f64>,
    worst: f64,
}

/// Every point of a regular grid over `[lower, upper]`, in row-major order.
fn grid_points(lower: &[f64], upper: &[f64], resolution: usize) -> Vec<Vec<f64>> {
    let n = lower.len();
    let total = resolution.pow(n as u32);
    (0..total)
        .map(|mut k| {
            let mut x = vec![0.0; n];
            for d in (0..n).rev() {
                let i = k % resolution;
                k /= resolution;
                let t = i as f64 / (resolution - 1) as f64;
                x[d] = lower[d] + t * (upper[d] - lower[d]);
            }
            x
        })
        .collect()
}

fn scan<P: Problem + ?Sized>(
    problem: &P,
    points: Vec<Vec<f64>>,
    scales: &[f64],
    tol: f64,
) -> Option<Cell> {
    let m = problem.n_constraints();
    let cells: Vec<Option<Cell>> = points
        .into_par_iter()
        .map(|x| {
            let mut constraints = vec![0.0; m];
            let objective = problem.evaluate(&x, &mut constraints).ok()?;
            let worst = constraints
                .iter()
                .zip(scales)
                .map(|(g, s)| g / s)
                .fold(f64::INFINITY, f64::min);
            Some(Cell {
                x,
                objective,
                constraints,
                worst,
            })
        })
        .collect();
    // sequential reduction keeps ties deterministic: the first grid point wins
    let mut best: Option<Cell> = None;
    for c in cells.into_iter().flatten() {
        let replace = match &best {
            None => true,
            Some(b) => match (c.worst >= -tol, b.worst >= -tol) {
                (true, false) => true,
                (false, true) => false,
                (true, true) => c.objective > b.objective,
                (false, false) => c.worst > b.worst,
            },
        };
        if replace {
            best = Some(c);
        }
    }
    best
}

/// Exhaustive scan at `resolution` points per axis, then one pass of the same
/// resolution over the cells adjacent to the best point.
pub fn grid_oracle<P: Problem + ?Sized>(
    problem: &P,
    resolution: usize,
    feasibility_tolerance: f64,
) -> Result<OptimizationResult, OptError> {
    let started = Instant::now();
    let (lower, upper) = problem.bounds();
    check_bounds(&lower, &upper)?;
    let n = lower.len();
    if n > MAX_DIMENSIONS {
        return Err(OptError::Unsupported(format!(
            "grid oracle supports at most {MAX_DIMENSIONS} parameters, got {n}"
        )));
    }
    if resolution < 2 {
        return Err(OptError::Config("grid resolution must be >= 2".into()));
    }
    let scales = problem.constraint_scales();
    let tol = feasibility_tolerance;

    let coarse = scan(
        problem,
        grid_points(&lower, &upper, resolution),
        &scales,
        tol,
    )
    .ok_or_else(|| OptError::Unsupported("no grid point could be evaluated".into()))?;
    let (lo, hi): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|d| {
            let cell = (upper[d] - lower[d]) / (resolution - 1) as f64;
            (
                (coarse.x[d] - cell).max(lower[d]),
                (coarse.x[d] + cell).min(upper[d]),
            )
        })
        .unzip();
    let fine = scan(problem, grid_points(&lo, &hi, resolution), &scales, tol);
    let best = match fine {
        Some(f)
            if (f.worst >= -tol && (coarse.worst < -tol || f.objective > coarse.objective))
                || (f.worst < -tol && coarse.worst < -tol && f.worst > coarse.worst) =>
        {
            f
        }
        _ => coarse,
    };
    let evaluations = 2 * resolution.pow(n as u32);
    Ok(OptimizationResult {
        method: "grid".into(),
        best_params: best.x,
        best_objective: best.objective,
        constraints: best.constraints,
        worst_residual: best.worst,
        feasible: best.worst >= -tol,
        iterations: evaluations,
        starts_tried: 0,
        starts_feasible: 0,
        fallback_starts: 0,
        wall_time: started.elapsed(),
    })
}
