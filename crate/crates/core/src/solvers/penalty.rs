//! Bounded penalization: `A u + M ζ θ_ε(u - ψ) = b + M ζ` and its variants.

use nalgebra::{DMatrix, DVector};

use crate::discretization::DiscreteSystem;
use crate::error::{domain, Error, Result};
use crate::fractional::PenaltyFunction;

use super::{is_bound, ObstacleSet, SolveResult};

/// `θ`, `ε` and the nodal penalty density `ζ` (so the nodal weight is `m_i ζ_i`).
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizationConfig {
    pub theta: PenaltyFunction,
    pub epsilon: f64,
    pub zeta: Vec<f64>,
}

/// Penalty data for two obstacles: `ζ_ψ ≥ (Aψ - b)^+ / m`, `ζ_φ ≥ (Aφ - b)^- / m`.
/// The bounds `ψ ≤ u_ε ≤ φ + ε` need a saturating `θ` and `φ - ψ ≥ ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPenaltyConfig {
    pub theta: PenaltyFunction,
    pub epsilon: f64,
    pub zeta_lower: Vec<f64>,
    pub zeta_upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Bound on the max nodal update at convergence.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub act_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 200, max_halvings: 30, act_tol: 1e-9 }
    }
}

/// Smallest admissible density `(A ψ - b)^+ / m`.
pub fn minimal_zeta(system: &DiscreteSystem, psi: &[f64]) -> Vec<f64> {
    let r = system.residual(psi);
    r.iter().zip(&system.mass_lumped).map(|(r, m)| r.max(0.0) / m).collect()
}

/// Smallest admissible upper density `(A φ - b)^- / m`.
pub fn minimal_zeta_upper(system: &DiscreteSystem, phi: &[f64]) -> Vec<f64> {
    let r = system.residual(phi);
    r.iter().zip(&system.mass_lumped).map(|(r, m)| (-r).max(0.0) / m).collect()
}

/// One penalty term `sign · w_i θ̃(dir (u_i - target_i))` where θ̃ is `θ_ε` or its lower variant.
#[derive(Debug, Clone)]
pub(crate) struct Term {
    pub weight: Vec<f64>,
    pub target: Vec<f64>,
    /// `+1` penalizes `u - target`, `-1` penalizes `target - u`.
    pub dir: f64,
    pub sign: f64,
    pub lower_variant: bool,
}

impl Term {
    fn value_and_slope(&self, theta: PenaltyFunction, eps: f64, i: usize, u: f64) -> (f64, f64) {
        let t = self.dir * (u - self.target[i]);
        let (v, d) = if self.lower_variant {
            // θ̄_ε(t) = 1 - θ(-t/ε)
            (1.0 - theta.value(-t / eps), theta.derivative(-t / eps) / eps)
        } else {
            (theta.value(t / eps), theta.derivative(t / eps) / eps)
        };
        (self.sign * self.weight[i] * v, self.sign * self.weight[i] * d * self.dir)
    }
}

/// Solves `A u + Σ terms(u) = rhs` by damped Newton with a nonlinear Gauss–Seidel fallback.
pub(crate) fn solve_semilinear(
    a: &DMatrix<f64>,
    rhs: &[f64],
    terms: &[Term],
    theta: PenaltyFunction,
    eps: f64,
    opts: &NewtonOptions,
    start: Vec<f64>,
) -> (Vec<f64>, usize, bool, Vec<f64>) {
    let n = rhs.len();
    let eval = |u: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut g = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 0..n {
            let mut acc = -rhs[i];
            for j in 0..n {
                acc += a[(i, j)] * u[j];
            }
            for t in terms {
                let (v, s) = t.value_and_slope(theta, eps, i, u[i]);
                acc += v;
                d[i] += s;
            }
            g[i] = acc;
        }
        (g, d)
    };
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut u = start;
    let mut history = Vec::new();
    let (mut g, mut d) = eval(&u);
    for it in 1..=opts.max_iter {
        let mut jac = a.clone();
        for i in 0..n {
            jac[(i, i)] += d[i];
        }
        let rhs_v = DVector::from_iterator(n, g.iter().map(|v| -v));
        let Some(delta) = jac.lu().solve(&rhs_v) else { break };
        let g0 = norm(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = u.iter().zip(delta.iter()).map(|(x, dx)| x + step * dx).collect();
            let (gt, dt) = eval(&trial);
            if norm(&gt) < g0 || g0 == 0.0 {
                accepted = Some((trial, gt, dt));
                break;
            }
            step *= 0.5;
        }
        let update = step * norm(delta.as_slice());
        history.push(update);
        match accepted {
            Some((trial, gt, dt)) => {
                u = trial;
                g = gt;
                d = dt;
                if update <= opts.tol {
                    return (u, it, true, history);
                }
            }
            None => {
                // No decrease along the Newton direction: either converged to rounding or stuck.
                if g0 <= 1e-13 * (1.0 + norm(rhs)) {
                    return (u, it, true, history);
                }
                break;
            }
        }
    }
    log::debug!("penalized Newton stalled; falling back to nonlinear Gauss-Seidel");
    let offset = history.len();
    let (u, sweeps, ok, more) = nonlinear_gauss_seidel(a, rhs, terms, theta, eps, opts, u);
    history.extend(more);
    (u, offset + sweeps, ok, history)
}

/// Sweeps scalar monotone solves `A_ii u_i + Σ terms_i(u_i) = rhs_i - Σ_{j≠i} A_ij u_j`.
fn nonlinear_gauss_seidel(
    a: &DMatrix<f64>,
    rhs: &[f64],
    terms: &[Term],
    theta: PenaltyFunction,
    eps: f64,
    opts: &NewtonOptions,
    mut u: Vec<f64>,
) -> (Vec<f64>, usize, bool, Vec<f64>) {
    let n = rhs.len();
    let mut history = Vec::new();
    let max_sweeps = 100_000;
    for sweep in 1..=max_sweeps {
        let mut change = 0.0f64;
        for i in 0..n {
            let mut c = rhs[i];
            for j in 0..n {
                if j != i {
                    c -= a[(i, j)] * u[j];
                }
            }
            let aii = a[(i, i)];
            let f = |x: f64| aii * x + terms.iter().map(|t| t.value_and_slope(theta, eps, i, x).0).sum::<f64>() - c;
            // f is increasing with slope ≥ aii; bracket and bisect.
            let mut lo = u[i] - 1.0;
            let mut hi = u[i] + 1.0;
            while f(lo) > 0.0 {
                lo -= 2.0 * (hi - lo);
            }
            while f(hi) < 0.0 {
                hi += 2.0 * (hi - lo);
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if f(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let new = 0.5 * (lo + hi);
            change = change.max((new - u[i]).abs());
            u[i] = new;
        }
        history.push(change);
        if change <= opts.tol {
            return (u, sweep, true, history);
        }
    }
    (u, max_sweeps, false, history)
}

fn check_common(system: &DiscreteSystem, psi: &[f64], eps: f64, zeta: &[f64], theta: PenaltyFunction) -> Result<()> {
    system.mesh.check_len("obstacle", psi.len())?;
    system.mesh.check_len("zeta", zeta.len())?;
    if !(eps.is_finite() && eps > 0.0) {
        return domain(format!("epsilon must be positive, got {eps}"));
    }
    if psi.iter().any(|v| !is_bound(*v)) {
        return domain("penalization needs a finite obstacle");
    }
    let minimal = minimal_zeta(system, psi);
    if let Some(i) = (0..psi.len()).find(|&i| zeta[i] < minimal[i] - 1e-10) {
        return domain(format!("zeta[{i}] = {} is below (Aψ - b)^+/m = {}", zeta[i], minimal[i]));
    }
    theta.validate(10_000).map(|_| ())
}

fn weights(system: &DiscreteSystem, zeta: &[f64]) -> Vec<f64> {
    zeta.iter().zip(&system.mass_lumped).map(|(z, m)| z * m).collect()
}

/// `u_ε`: approaches the obstacle solution from above.
pub fn solve_penalized(system: &DiscreteSystem, psi: &[f64], config: &PenalizationConfig, opts: &NewtonOptions) -> Result<SolveResult> {
    penalized_one(system, psi, config, opts, false)
}

/// `ū_ε` with `θ̄_ε(t) = 1 - θ(-t/ε)`: approaches from below.
pub fn solve_penalized_lower(system: &DiscreteSystem, psi: &[f64], config: &PenalizationConfig, opts: &NewtonOptions) -> Result<SolveResult> {
    penalized_one(system, psi, config, opts, true)
}

fn penalized_one(
    system: &DiscreteSystem,
    psi: &[f64],
    config: &PenalizationConfig,
    opts: &NewtonOptions,
    lower_variant: bool,
) -> Result<SolveResult> {
    check_common(system, psi, config.epsilon, &config.zeta, config.theta)?;
    let w = weights(system, &config.zeta);
    let rhs: Vec<f64> = system.load.iter().zip(&w).map(|(b, w)| b + w).collect();
    let term = Term { weight: w, target: psi.to_vec(), dir: 1.0, sign: 1.0, lower_variant };
    let start = psi.iter().map(|p| p.max(0.0)).collect();
    let (u, iters, ok, history) =
        solve_semilinear(&system.stiffness, &rhs, &[term], config.theta, config.epsilon, opts, start);
    check_finite(&u)?;
    let name = if lower_variant { "penalized_lower" } else { "penalized" };
    Ok(SolveResult::finish(system, &ObstacleSet::lower(psi.to_vec()), u, iters, ok, history, opts.act_tol, name))
}

pub(crate) fn solve_penalized_two(
    system: &DiscreteSystem,
    obstacles: &ObstacleSet,
    cfg: &TwoPenaltyConfig,
    opts: &NewtonOptions,
) -> Result<SolveResult> {
    let psi = &obstacles.lower;
    let Some(phi) = &obstacles.upper else {
        return domain("two-obstacle penalization needs an upper obstacle");
    };
    check_common(system, psi, cfg.epsilon, &cfg.zeta_lower, cfg.theta)?;
    if phi.iter().any(|v| !is_bound(*v)) {
        return domain("penalization needs a finite upper obstacle");
    }
    system.mesh.check_len("zeta_upper", cfg.zeta_upper.len())?;
    let minimal = minimal_zeta_upper(system, phi);
    if let Some(i) = (0..phi.len()).find(|&i| cfg.zeta_upper[i] < minimal[i] - 1e-10) {
        return domain(format!("zeta_upper[{i}] is below (Aφ - b)^-/m"));
    }
    let wl = weights(system, &cfg.zeta_lower);
    let wu = weights(system, &cfg.zeta_upper);
    let rhs: Vec<f64> = (0..system.n()).map(|i| system.load[i] + wl[i] - wu[i]).collect();
    let terms = [
        Term { weight: wl, target: psi.clone(), dir: 1.0, sign: 1.0, lower_variant: false },
        Term { weight: wu, target: phi.clone(), dir: -1.0, sign: -1.0, lower_variant: false },
    ];
    let start = (0..system.n()).map(|i| obstacles.project(i, 0.0)).collect();
    let (u, iters, ok, history) = solve_semilinear(&system.stiffness, &rhs, &terms, cfg.theta, cfg.epsilon, opts, start);
    check_finite(&u)?;
    Ok(SolveResult::finish(system, obstacles, u, iters, ok, history, opts.act_tol, "penalized_two"))
}

fn check_finite(u: &[f64]) -> Result<()> {
    if u.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure("penalized solve produced non-finite values".into()))
    }
}
