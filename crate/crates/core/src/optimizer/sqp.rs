//! SQP with a damped BFGS Hessian and an L1 merit line search, plus an
//! augmented-Lagrangian fallback. Both work on the unit box `[0, 1]^n`.

use quadprog::{solve_qp, Error as QpError};

use crate::vector::VectorError;

/// A minimization problem in normalized coordinates: `min F(z)` subject to
/// `c(z) >= 0` and `0 <= z <= 1`.
pub(crate) trait Scaled: Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn eval(&self, z: &[f64], c: &mut [f64]) -> Result<f64, VectorError>;
}

#[derive(Debug, Clone)]
pub(crate) struct Settings {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub feasibility_tolerance: f64,
    /// Finite-difference step per coordinate, in normalized units.
    pub steps: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Local {
    pub z: Vec<f64>,
    pub c: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug)]
pub(crate) enum Failure {
    /// The linearized constraints are inconsistent with the box.
    QpInfeasible,
    Eval(VectorError),
}

impl From<VectorError> for Failure {
    fn from(e: VectorError) -> Self {
        Failure::Eval(e)
    }
}

fn violation(c: &[f64]) -> f64 {
    c.iter().map(|v| (-v).max(0.0)).sum()
}

pub(crate) fn worst(c: &[f64]) -> f64 {
    c.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Gradient of `F` and row-major Jacobian of `c`, by central differences
/// (one-sided next to the box faces).
fn derivatives(
    p: &dyn Scaled,
    z: &[f64],
    f0: f64,
    c0: &[f64],
    steps: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), VectorError> {
    let (n, m) = (p.n(), p.m());
    let mut grad = vec![0.0; n];
    let mut jac = vec![0.0; m * n];
    let mut zp = z.to_vec();
    let mut cp = vec![0.0; m];
    let mut cm = vec![0.0; m];
    for i in 0..n {
        let h = steps[i];
        let (up, down) = (z[i] + h <= 1.0, z[i] - h >= 0.0);
        let (fp, fm, width) = match (up, down) {
            (true, true) => {
                zp[i] = z[i] + h;
                let fp = p.eval(&zp, &mut cp)?;
                zp[i] = z[i] - h;
                let fm = p.eval(&zp, &mut cm)?;
                (fp, fm, 2.0 * h)
            }
            (true, false) => {
                zp[i] = z[i] + h;
                let fp = p.eval(&zp, &mut cp)?;
                cm.copy_from_slice(c0);
                (fp, f0, h)
            }
            _ => {
                zp[i] = z[i] - h;
                let fm = p.eval(&zp, &mut cm)?;
                cp.copy_from_slice(c0);
                (f0, fm, h)
            }
        };
        zp[i] = z[i];
        grad[i] = (fp - fm) / width;
        for j in 0..m {
            jac[j * n + i] = (cp[j] - cm[j]) / width;
        }
    }
    Ok((grad, jac))
}

fn identity(n: usize) -> Vec<f64> {
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        b[i * n + i] = 1.0;
    }
    b
}

/// `min 1/2 d'Bd + g'd` s.t. `c + J d >= 0`, `0 <= z + d <= 1`.
fn subproblem(
    b: &[f64],
    g: &[f64],
    jac: &[f64],
    c: &[f64],
    z: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), QpError> {
    let n = g.len();
    let m = c.len();
    let rows = m + 2 * n;
    let mut amat = Vec::with_capacity(rows * n);
    let mut bvec = Vec::with_capacity(rows);
    for j in 0..m {
        amat.extend(jac[j * n..(j + 1) * n].iter().map(|v| -v));
        bvec.push(c[j]);
    }
    for i in 0..n {
        let mut row = vec![0.0; n];
        row[i] = -1.0;
        amat.extend_from_slice(&row);
        bvec.push(z[i]);
        row[i] = 1.0;
        amat.extend_from_slice(&row);
        bvec.push(1.0 - z[i]);
    }
    let mut q = b.to_vec();
    let sol = solve_qp(&mut q, g, &amat, &bvec, 0, false)?;
    Ok((sol.sol, sol.lagr[..m].to_vec()))
}

/// Steepest-descent step projected onto the unit box.
fn projected_gradient(z: &[f64], g: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(g)
        .map(|(z, g)| (z - g).clamp(0.0, 1.0) - z)
        .collect()
}

fn clamp_unit(z: &mut [f64]) {
    for v in z {
        *v = v.clamp(0.0, 1.0);
    }
}

pub(crate) fn sqp(p: &dyn Scaled, z0: &[f64], s: &Settings) -> Result<Local, Failure> {
    let (n, m) = (p.n(), p.m());
    let mut z = z0.to_vec();
    clamp_unit(&mut z);
    let mut c = vec![0.0; m];
    let mut f = p.eval(&z, &mut c)?;
    let (mut g, mut jac) = derivatives(p, &z, f, &c, &s.steps)?;
    let mut b = identity(n);
    let mut mu: f64 = 1.0;
    let mut iterations = 0;

    let mut ct = vec![0.0; m];
    while iterations < s.max_iterations {
        iterations += 1;
        let (d, lambda) = match subproblem(&b, &g, &jac, &c, &z) {
            Ok(r) => r,
            Err(QpError::NotPositiveDefinite) => {
                b = identity(n);
                continue;
            }
            // The box alone is always consistent, so this is a numerical
            // failure on a badly conditioned B.
            Err(QpError::Infeasible) if m == 0 && b != identity(n) => {
                b = identity(n);
                continue;
            }
            Err(QpError::Infeasible) if m == 0 => (projected_gradient(&z, &g), Vec::new()),
            Err(QpError::Infeasible) => return Err(Failure::QpInfeasible),
            Err(e) => unreachable!("quadprog rejected well-formed input: {e}"),
        };
        let step_size = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if step_size <= s.tolerance && violation(&c) <= s.feasibility_tolerance {
            break;
        }

        let lmax = lambda.iter().fold(0.0_f64, |a, v| a.max(*v));
        if mu < 1.5 * lmax {
            mu = 2.0 * lmax;
        }
        let phi0 = f + mu * violation(&c);
        let slope = g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() - mu * violation(&c);

        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-10 {
            let mut trial: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            clamp_unit(&mut trial);
            if let Ok(ft) = p.eval(&trial, &mut ct) {
                let phit = ft + mu * violation(&ct);
                if phit.is_finite() && phit <= phi0 + 1e-4 * alpha * slope.min(0.0) {
                    accepted = Some((trial, ft, phit));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((zn, fn_, phin)) = accepted else {
            if b != identity(n) {
                b = identity(n);
                continue;
            }
            break;
        };

        let (gn, jn) = derivatives(p, &zn, fn_, &ct, &s.steps)?;
        let sv: Vec<f64> = zn.iter().zip(&z).map(|(a, b)| a - b).collect();
        let lag_grad = |g: &[f64], jac: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| g[i] - (0..m).map(|j| jac[j * n + i] * lambda[j]).sum::<f64>())
                .collect()
        };
        let l1 = lag_grad(&gn, &jn);
        let l0 = lag_grad(&g, &jac);
        let mut y: Vec<f64> = l1.iter().zip(&l0).map(|(a, b)| a - b).collect();
        bfgs_update(&mut b, &sv, &mut y);

        let moved = sv.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let change = (phin - phi0).abs();
        z = zn;
        f = fn_;
        c.copy_from_slice(&ct);
        g = gn;
        jac = jn;
        let feasible = violation(&c) <= s.feasibility_tolerance;
        if feasible && (moved <= s.tolerance || change <= s.tolerance * (1.0 + phi0.abs())) {
            break;
        }
    }
    Ok(Local { z, c, iterations })
}

/// BFGS update with Powell damping, which keeps `b` positive definite.
fn bfgs_update(b: &mut [f64], s: &[f64], y: &mut [f64]) {
    let n = s.len();
    let bs: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|k| b[i * n + k] * s[k]).sum())
        .collect();
    let sbs: f64 = s.iter().zip(&bs).map(|(a, b)| a * b).sum();
    if sbs.is_nan() || sbs <= 1e-16 {
        return;
    }
    let sy: f64 = s.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
    if sy < 0.2 * sbs {
        let theta = 0.8 * sbs / (sbs - sy);
        for i in 0..n {
            y[i] = theta * y[i] + (1.0 - theta) * bs[i];
        }
    }
    let sy: f64 = s.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
    if sy.is_nan() || sy <= 1e-16 {
        return;
    }
    for i in 0..n {
        for k in 0..n {
            b[i * n + k] += y[i] * y[k] / sy - bs[i] * bs[k] / sbs;
        }
    }
}

/// `F(z) + sum_j psi(c_j)` with the usual inequality penalty
/// `psi = -lambda c + rho/2 c^2` if `c <= lambda/rho`, else `-lambda^2 / (2 rho)`.
struct AugmentedLagrangian<'a> {
    inner: &'a dyn Scaled,
    lambda: Vec<f64>,
    rho: f64,
}

impl Scaled for AugmentedLagrangian<'_> {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn m(&self) -> usize {
        0
    }

    fn eval(&self, z: &[f64], _: &mut [f64]) -> Result<f64, VectorError> {
        let mut c = vec![0.0; self.inner.m()];
        let f = self.inner.eval(z, &mut c)?;
        let penalty: f64 = c
            .iter()
            .zip(&self.lambda)
            .map(|(&cj, &lj)| {
                if cj - lj / self.rho <= 0.0 {
                    -lj * cj + 0.5 * self.rho * cj * cj
                } else {
                    -lj * lj / (2.0 * self.rho)
                }
            })
            .sum();
        Ok(f + penalty)
    }
}

pub(crate) fn augmented_lagrangian(
    p: &dyn Scaled,
    z0: &[f64],
    s: &Settings,
) -> Result<Local, VectorError> {
    let m = p.m();
    let mut al = AugmentedLagrangian {
        inner: p,
        lambda: vec![0.0; m],
        rho: 10.0,
    };
    let mut z = z0.to_vec();
    let mut c = vec![0.0; m];
    let mut iterations = 0;
    let mut last_violation = f64::INFINITY;
    for _ in 0..30 {
        let local = match sqp(&al, &z, s) {
            Ok(l) => l,
            Err(Failure::Eval(e)) => return Err(e),
            Err(Failure::QpInfeasible) => {
                unreachable!("box-only subproblems never report infeasibility")
            }
        };
        iterations += local.iterations;
        let moved = local
            .z
            .iter()
            .zip(&z)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
        z = local.z;
        p.eval(&z, &mut c)?;
        let v = (-worst(&c)).max(0.0);
        for (l, cj) in al.lambda.iter_mut().zip(&c) {
            *l = (*l - al.rho * cj).max(0.0);
        }
        if v <= s.feasibility_tolerance && moved <= s.tolerance.sqrt() {
            break;
        }
        if v > 0.25 * last_violation {
            al.rho = (al.rho * 10.0).min(1e10);
        }
        last_violation = v;
    }
    p.eval(&z, &mut c)?;
    Ok(Local { z, c, iterations })
}
