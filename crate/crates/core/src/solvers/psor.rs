use crate::discretization::DiscreteSystem;
use crate::error::{domain, Result};

use super::penalty::{solve_penalized_two, TwoPenaltyConfig};
use super::{NewtonOptions, ObstacleSet, SolveResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsorOptions {
    pub omega: f64,
    /// Bound on the max nodal update at convergence.
    pub tol: f64,
    pub max_iter: usize,
    /// Distance to an obstacle counted as contact.
    pub act_tol: f64,
}

impl Default for PsorOptions {
    fn default() -> Self {
        Self { omega: 1.5, tol: 1e-10, max_iter: 200_000, act_tol: 1e-9 }
    }
}

/// Projected SOR from the projection of zero.
pub fn solve_psor(system: &DiscreteSystem, obstacles: &ObstacleSet, opts: &PsorOptions) -> Result<SolveResult> {
    let n = system.n();
    obstacles.validate(n)?;
    let start: Vec<f64> = (0..n).map(|i| obstacles.project(i, 0.0)).collect();
    solve_psor_from(system, obstacles, opts, start)
}

/// Projected SOR from a given start (projected onto the admissible set first).
pub fn solve_psor_from(system: &DiscreteSystem, obstacles: &ObstacleSet, opts: &PsorOptions, start: Vec<f64>) -> Result<SolveResult> {
    let n = system.n();
    obstacles.validate(n)?;
    system.mesh.check_len("start vector", start.len())?;
    if !(opts.omega > 0.0 && opts.omega < 2.0) {
        return domain(format!("omega must lie in (0,2), got {}", opts.omega));
    }
    let a = &system.stiffness;
    if let Some(i) = (0..n).find(|&i| a[(i, i)] <= 0.0) {
        return domain(format!("stiffness diagonal is not positive at dof {i}"));
    }
    let b = &system.load;
    let mut u: Vec<f64> = start.iter().enumerate().map(|(i, &v)| obstacles.project(i, v)).collect();
    let mut history = Vec::new();
    // Row-major copy: the sweep walks rows.
    let rows: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).iter().copied().collect()).collect();

    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        let mut change = 0.0f64;
        for i in 0..n {
            let r: f64 = b[i] - rows[i].iter().zip(&u).map(|(x, y)| x * y).sum::<f64>();
            let new = obstacles.project(i, u[i] + opts.omega * r / rows[i][i]);
            change = change.max((new - u[i]).abs());
            u[i] = new;
        }
        history.push(change);
        if change <= opts.tol {
            let res = SolveResult::finish(system, obstacles, u, it, true, history, opts.act_tol, "psor");
            return Ok(res);
        }
        let diverging = !change.is_finite() || (it > 50 && change > 1e3 * history[it - 51]);
        if diverging {
            log::warn!("psor update grew to {change:e} after {it} sweeps; switching to projected Richardson");
            return richardson(system, obstacles, opts, start, history);
        }
    }
    Ok(SolveResult::finish(system, obstacles, u, it, false, history, opts.act_tol, "psor"))
}

/// `u ← P(u - (A u - b) / ‖A‖_∞)`.
fn richardson(
    system: &DiscreteSystem,
    obstacles: &ObstacleSet,
    opts: &PsorOptions,
    start: Vec<f64>,
    mut history: Vec<f64>,
) -> Result<SolveResult> {
    let n = system.n();
    let norm = (0..n)
        .map(|i| system.stiffness.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / norm;
    let mut u: Vec<f64> = start.iter().enumerate().map(|(i, &v)| obstacles.project(i, v)).collect();
    let offset = history.len();
    for it in 1..=opts.max_iter {
        let r = system.residual(&u);
        let mut change = 0.0f64;
        for i in 0..n {
            let new = obstacles.project(i, u[i] - step * r[i]);
            change = change.max((new - u[i]).abs());
            u[i] = new;
        }
        history.push(change);
        if change <= 1e-2 * opts.tol {
            return Ok(SolveResult::finish(system, obstacles, u, offset + it, true, history, opts.act_tol, "richardson"));
        }
        if !change.is_finite() {
            break;
        }
    }
    let iters = history.len();
    Ok(SolveResult::finish(system, obstacles, u, iters, false, history, opts.act_tol, "richardson"))
}

/// Algorithm for the two-obstacle problem.
#[derive(Debug, Clone, PartialEq)]
pub enum TwoObstacleMethod {
    Psor(PsorOptions),
    Penalized(TwoPenaltyConfig, NewtonOptions),
}

/// `ψ ≤ u ≤ φ` with two-sided complementarity.
pub fn solve_two_obstacles(system: &DiscreteSystem, obstacles: &ObstacleSet, method: &TwoObstacleMethod) -> Result<SolveResult> {
    obstacles.validate(system.n())?;
    match method {
        TwoObstacleMethod::Psor(opts) => solve_psor(system, obstacles, opts),
        TwoObstacleMethod::Penalized(cfg, opts) => solve_penalized_two(system, obstacles, cfg, opts),
    }
}
