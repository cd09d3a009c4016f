//! Checkers for the Lewy–Stampacchia inequalities, penalization studies, the `s → 1` experiment
//! and the order-theoretic properties of the discrete obstacle problem.

use crate::discretization::{add_mass, assemble_stiffness, classical_stiffness, DiscreteSystem};
use crate::error::{usage, Error, Result};
use crate::exec::Exec;
use crate::fractional::{ds_norm_sq_nodal, PenaltyFunction};
use crate::kernels::ds_energy_kernel;
use crate::mesh::Mesh;
use crate::solvers::{
    minimal_zeta, solve_penalized, solve_psor, solve_two_obstacles, is_bound, MembraneResult, NewtonOptions, ObstacleSet,
    PenalizationConfig, PsorOptions, SolveResult, TwoObstacleMethod,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LSReport {
    /// `max (lower_i - (A u)_i)^+`.
    pub lower_violation: f64,
    /// `max ((A u)_i - upper_i)^+`.
    pub upper_violation: f64,
    pub tol: f64,
    pub pass: bool,
}

impl LSReport {
    fn from_bounds(au: &[f64], lower: &[f64], upper: &[f64], tol: f64) -> Self {
        let lower_violation = au.iter().zip(lower).fold(0.0f64, |m, (a, l)| m.max(l - a));
        let upper_violation = au.iter().zip(upper).fold(0.0f64, |m, (a, u)| m.max(a - u));
        Self { lower_violation, upper_violation, tol, pass: lower_violation <= tol && upper_violation <= tol }
    }
}

fn refuse_unconverged(converged: bool) -> Result<()> {
    if converged {
        Ok(())
    } else {
        Err(Error::Refused("Lewy-Stampacchia check needs a converged solve".into()))
    }
}

fn require_finite(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| is_bound(*x)) {
        Ok(())
    } else {
        usage(format!("{name} must be finite for the Lewy-Stampacchia bounds"))
    }
}

/// `b ≤ A u ≤ b ∨ A ψ` componentwise.
pub fn check_ls_one(system: &DiscreteSystem, psi: &[f64], result: &SolveResult, tol: f64) -> Result<LSReport> {
    refuse_unconverged(result.converged)?;
    system.mesh.check_len("psi", psi.len())?;
    require_finite("psi", psi)?;
    let au = system.apply(&result.u);
    let apsi = system.apply(psi);
    let upper: Vec<f64> = system.load.iter().zip(&apsi).map(|(b, a)| b.max(*a)).collect();
    Ok(LSReport::from_bounds(&au, &system.load, &upper, tol))
}

/// `b ∧ A φ ≤ A u ≤ b ∨ A ψ` componentwise.
pub fn check_ls_two(system: &DiscreteSystem, psi: &[f64], phi: &[f64], result: &SolveResult, tol: f64) -> Result<LSReport> {
    refuse_unconverged(result.converged)?;
    system.mesh.check_len("psi", psi.len())?;
    system.mesh.check_len("phi", phi.len())?;
    require_finite("psi", psi)?;
    require_finite("phi", phi)?;
    let au = system.apply(&result.u);
    let apsi = system.apply(psi);
    let aphi = system.apply(phi);
    let lower: Vec<f64> = system.load.iter().zip(&aphi).map(|(b, a)| b.min(*a)).collect();
    let upper: Vec<f64> = system.load.iter().zip(&apsi).map(|(b, a)| b.max(*a)).collect();
    Ok(LSReport::from_bounds(&au, &lower, &upper, tol))
}

/// Chain bounds `min(b^1..b^j) ≤ A u_j ≤ max(b^j..b^N)` for every membrane `j`.
pub fn check_ls_membranes(system: &DiscreteSystem, loads: &[Vec<f64>], result: &MembraneResult, tol: f64) -> Result<Vec<LSReport>> {
    refuse_unconverged(result.converged)?;
    if loads.len() != result.u.len() {
        return usage(format!("{} loads for {} membranes", loads.len(), result.u.len()));
    }
    let n = system.n();
    let nm = loads.len();
    (0..nm)
        .map(|j| {
            let au = system.apply(&result.u[j]);
            let lower: Vec<f64> = (0..n).map(|k| loads[..=j].iter().map(|b| b[k]).fold(f64::INFINITY, f64::min)).collect();
            let upper: Vec<f64> = (0..n).map(|k| loads[j..].iter().map(|b| b[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
            Ok(LSReport::from_bounds(&au, &lower, &upper, tol))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyRow {
    pub epsilon: f64,
    /// `ds_norm_sq(u - u_ε)`.
    pub error: f64,
    /// `ε (C_θ / a_*) Σ h ζ_i`.
    pub bound: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyStudy {
    pub rows: Vec<PenaltyRow>,
    pub zeta_l1: f64,
    pub bound_holds: bool,
    /// Errors nonincreasing as `ε` decreases, up to a round-off floor of `1e-12` times the largest
    /// bound (a fully active obstacle gives `u_ε = u` exactly).
    pub monotone: bool,
}

impl PenaltyStudy {
    pub fn pass(&self) -> bool {
        self.bound_holds && self.monotone && self.rows.iter().all(|r| r.converged)
    }
}

/// Relative slack allowed on the error bound.
pub const PENALTY_BOUND_SLACK: f64 = 1e-3;
/// Absolute round-off allowance on the error (a zero `ζ` gives a zero bound).
pub const PENALTY_ABS_TOL: f64 = 1e-20;

/// Solves the penalized problem with the minimal `ζ = (A ψ - b)^+ / m` for each `ε` and compares
/// with the PSOR solution. `eps_list` is processed in the order given; monotonicity is checked
/// after sorting by decreasing `ε`.
pub fn penalization_error_study(system: &DiscreteSystem, psi: &[f64], theta: PenaltyFunction, eps_list: &[f64]) -> Result<PenaltyStudy> {
    let s = order(system)?;
    let exact = solve_psor(system, &ObstacleSet::lower(psi.to_vec()), &PsorOptions { tol: 1e-13, ..PsorOptions::default() })?;
    if !exact.converged {
        return Err(Error::NumericalFailure("reference PSOR solve did not converge".into()));
    }
    let zeta = minimal_zeta(system, psi);
    let zeta_l1: f64 = zeta.iter().zip(&system.mass_lumped).map(|(z, m)| z * m).sum();
    let a_lower = system.band.0;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let cfg = PenalizationConfig { theta, epsilon: eps, zeta: zeta.clone() };
        let r = solve_penalized(system, psi, &cfg, &NewtonOptions::default())?;
        let diff: Vec<f64> = exact.u.iter().zip(&r.u).map(|(a, b)| a - b).collect();
        rows.push(PenaltyRow {
            epsilon: eps,
            error: ds_norm_sq_nodal(&system.mesh, &diff, s)?,
            bound: eps * theta.c_theta() / a_lower * zeta_l1,
            converged: r.converged,
        });
    }
    let bound_holds = rows.iter().all(|r| r.error <= r.bound * (1.0 + PENALTY_BOUND_SLACK) + PENALTY_ABS_TOL);
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let floor = 1e-12 * rows.iter().fold(0.0f64, |m, r| m.max(r.bound));
    let monotone = sorted.windows(2).all(|w| w[1].error <= w[0].error * (1.0 + 1e-12) + floor);
    Ok(PenaltyStudy { rows, zeta_l1, bound_holds, monotone })
}

fn order(system: &DiscreteSystem) -> Result<f64> {
    system.order.ok_or_else(|| Error::Usage("system carries no fractional order; use with_order".into()))
}

/// Exact `L^2` norm of the P1 interpolant of nodal values (zero at the boundary).
pub fn l2_norm_p1(mesh: &Mesh, values: &[f64]) -> f64 {
    let h = mesh.h();
    let at = |k: usize| if k == 0 || k > values.len() { 0.0 } else { values[k - 1] };
    let sum: f64 = (0..mesh.num_elements()).map(|e| {
        let (a, b) = (at(e), at(e + 1));
        a * a + a * b + b * b
    }).sum();
    (h * sum / 3.0).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub s: f64,
    pub u: Vec<f64>,
    pub l2_distance: f64,
    pub max_distance: f64,
    pub h: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SToOneStudy {
    pub records: Vec<SweepRecord>,
    /// Classical `s = 1` obstacle solution.
    pub reference: Vec<f64>,
    pub reference_converged: bool,
    /// Distance at the last `s` strictly below the distance at the first.
    pub endpoint_decrease: bool,
    /// Reported only.
    pub interior_monotone: bool,
}

/// Obstacle problem with the classical tridiagonal stiffness and lumped load `h f`.
pub fn classical_system(mesh: Mesh, f: &[f64]) -> Result<DiscreteSystem> {
    mesh.check_len("f", f.len())?;
    let h = mesh.h();
    Ok(DiscreteSystem::new(mesh, classical_stiffness(&mesh), f.iter().map(|v| v * h).collect(), (1.0, 1.0))?.with_order(1.0))
}

/// For each `s`, solves the obstacle problem for the kernel `C_{1,s} |x-y|^{-1-2s}` (whose form is
/// `∫ D^s u D^s v`, the family that tends to `∫ u' v'`) and measures the distance to the classical
/// solution. `f` and `psi` are nodal.
pub fn s_to_one_study(mesh: &Mesh, psi: &[f64], f: &[f64], s_list: &[f64], exec: Exec) -> Result<SToOneStudy> {
    if s_list.is_empty() || s_list.windows(2).any(|w| w[0] >= w[1]) {
        return usage("s_list must be nonempty and strictly increasing");
    }
    mesh.check_len("psi", psi.len())?;
    let classical = classical_system(*mesh, f)?;
    let opts = PsorOptions { tol: 1e-12, ..PsorOptions::default() };
    let reference = solve_psor(&classical, &ObstacleSet::lower(psi.to_vec()), &opts)?;
    let solves = exec.map(s_list.len(), |k| -> Result<SweepRecord> {
        let s = s_list[k];
        let kernel = ds_energy_kernel(s)?;
        let a = assemble_stiffness(mesh, &kernel)?.matrix;
        let sys = DiscreteSystem::new(*mesh, a, classical.load.clone(), (kernel.a_lower(), kernel.a_upper()))?;
        let r = solve_psor(&sys, &ObstacleSet::lower(psi.to_vec()), &opts)?;
        let diff: Vec<f64> = r.u.iter().zip(&reference.u).map(|(a, b)| a - b).collect();
        Ok(SweepRecord {
            s,
            l2_distance: l2_norm_p1(mesh, &diff),
            max_distance: diff.iter().fold(0.0f64, |m, d| m.max(d.abs())),
            u: r.u,
            h: mesh.h(),
            converged: r.converged,
        })
    });
    let records = solves.into_iter().collect::<Result<Vec<_>>>()?;
    let first = records.first().map_or(0.0, |r| r.l2_distance);
    let last = records.last().map_or(0.0, |r| r.l2_distance);
    Ok(SToOneStudy {
        endpoint_decrease: last < first,
        interior_monotone: records.windows(2).all(|w| w[1].l2_distance <= w[0].l2_distance),
        records,
        reference: reference.u,
        reference_converged: reference.converged,
    })
}

/// Outcome of one order-theoretic property check: `pass ⟺ violation ≤ slack`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropertyReport {
    pub violation: f64,
    pub slack: f64,
    pub pass: bool,
}

impl PropertyReport {
    fn new(violation: f64, slack: f64) -> Self {
        Self { violation, slack, pass: violation <= slack }
    }
}

fn psor_precise() -> PsorOptions {
    PsorOptions { tol: 1e-13, ..PsorOptions::default() }
}

fn solve_checked(system: &DiscreteSystem, obstacles: &ObstacleSet) -> Result<Vec<f64>> {
    let r = solve_two_obstacles(system, obstacles, &TwoObstacleMethod::Psor(psor_precise()))?;
    if r.converged {
        Ok(r.u)
    } else {
        Err(Error::NumericalFailure("property check solve did not converge".into()))
    }
}

/// `b ≥ b̂`, `ψ ≥ ψ̂` ⇒ `u ≥ û`; violation is `max (û - u)^+`.
pub fn comparison_principle(system: &DiscreteSystem, b_hat: &[f64], psi: &[f64], psi_hat: &[f64], slack: f64) -> Result<PropertyReport> {
    if system.load.iter().zip(b_hat).any(|(b, c)| b < c) || psi.iter().zip(psi_hat).any(|(p, q)| p < q) {
        return usage("comparison principle needs b >= b_hat and psi >= psi_hat");
    }
    let u = solve_checked(system, &ObstacleSet::lower(psi.to_vec()))?;
    let u_hat = solve_checked(&system.with_load(b_hat.to_vec())?, &ObstacleSet::lower(psi_hat.to_vec()))?;
    Ok(PropertyReport::new(u.iter().zip(&u_hat).fold(0.0f64, |m, (a, b)| m.max(b - a)), slack))
}

/// `b ≤ 0` ⇒ `u ≤ max(0, max ψ)`.
pub fn weak_maximum_principle(system: &DiscreteSystem, psi: &[f64], slack: f64) -> Result<PropertyReport> {
    if system.load.iter().any(|b| *b > 0.0) {
        return usage("weak maximum principle needs a nonpositive load");
    }
    let u = solve_checked(system, &ObstacleSet::lower(psi.to_vec()))?;
    let cap = psi.iter().copied().fold(0.0f64, f64::max);
    Ok(PropertyReport::new(u.iter().fold(0.0f64, |m, v| m.max(v - cap)), slack))
}

/// `max |u - û| ≤ max |ψ - ψ̂| (+ max |φ - φ̂|)` for the same load.
pub fn linf_obstacle_dependence(system: &DiscreteSystem, first: &ObstacleSet, second: &ObstacleSet, slack: f64) -> Result<PropertyReport> {
    let u = solve_checked(system, first)?;
    let v = solve_checked(system, second)?;
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let mut bound = sup(&first.lower, &second.lower);
    match (&first.upper, &second.upper) {
        (Some(p), Some(q)) => bound += sup(p, q),
        (None, None) => {}
        _ => return usage("both obstacle sets must have the same shape"),
    }
    Ok(PropertyReport::new(sup(&u, &v) - bound, slack))
}

/// With the zeroth-order term `λ M` and nodal density `f` (load `M f`):
/// `min(0, min f/λ) ≤ u ≤ max(0, max ψ, max f/λ)`.
pub fn e_lambda_bounds(system: &DiscreteSystem, lambda: f64, f: &[f64], psi: &[f64], slack: f64) -> Result<PropertyReport> {
    if !(lambda > 0.0) {
        return usage("E_lambda bounds need lambda > 0");
    }
    system.mesh.check_len("f", f.len())?;
    let load = f.iter().zip(&system.mass_lumped).map(|(f, m)| f * m).collect();
    let sys = add_mass(&system.with_load(load)?, lambda)?;
    let u = solve_checked(&sys, &ObstacleSet::lower(psi.to_vec()))?;
    let fmin = f.iter().copied().fold(f64::INFINITY, f64::min) / lambda;
    let fmax = f.iter().copied().fold(f64::NEG_INFINITY, f64::max) / lambda;
    let lower = fmin.min(0.0);
    let upper = psi.iter().copied().fold(0.0f64, f64::max).max(fmax);
    let violation = u.iter().fold(0.0f64, |m, v| m.max(lower - v).max(v - upper));
    Ok(PropertyReport::new(violation, slack))
}

/// PSOR from two starting points; violation is the max-norm gap.
pub fn uniqueness_check(system: &DiscreteSystem, psi: &[f64], slack: f64) -> Result<PropertyReport> {
    use crate::solvers::solve_psor_from;
    let obs = ObstacleSet::lower(psi.to_vec());
    let a = solve_psor_from(system, &obs, &psor_precise(), psi.iter().map(|p| p.max(0.0)).collect())?;
    let b = solve_psor_from(system, &obs, &psor_precise(), psi.iter().map(|p| p.max(0.0) + 1.0).collect())?;
    Ok(PropertyReport::new(a.u.iter().zip(&b.u).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())), slack))
}

/// Largest entrywise relative gap between the nonsymmetric and symmetric assembly paths
/// (both by quadrature, so the exact Toeplitz route does not short-circuit the comparison).
pub fn assembly_cross_check(mesh: &Mesh, kernel: &crate::kernels::Kernel, exec: Exec) -> Result<f64> {
    use crate::discretization::{assemble_stiffness_symmetric_with, assemble_stiffness_with, AssemblyOptions};
    let opts = AssemblyOptions { exec, exact_fractional: false };
    let a = assemble_stiffness_with(mesh, kernel, &opts)?.matrix;
    let b = assemble_stiffness_symmetric_with(mesh, kernel, &opts)?.matrix;
    let floor = 1e-14 * a.amax();
    Ok(a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs() / x.abs().max(floor))))
}

/// Coercivity, boundedness and strict T-monotonicity of `A_h` on random nodal vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormInvariants {
    pub samples: usize,
    /// `min (uᵀ A u - a_* ‖u‖²)`; must be `≥ -1e-6`.
    pub coercivity_margin: f64,
    /// `min (a^* ‖u‖ ‖v‖ - |vᵀ A u|)`; must be `≥ -1e-6`.
    pub boundedness_margin: f64,
    /// `min (v^+)ᵀ A v` over samples with `v^+ ≠ 0`; must be `> 0`.
    pub t_monotone_min: f64,
    pub pass: bool,
}

pub const FORM_SLACK: f64 = 1e-6;

pub fn form_invariants(system: &DiscreteSystem, samples: usize, seed: u64) -> Result<FormInvariants> {
    use rand::RngExt;
    let s = order(system)?;
    let n = system.n();
    let mut rng = crate::instances::rng(seed);
    let (lo, hi) = system.band;
    let mut coercivity_margin = f64::INFINITY;
    let mut boundedness_margin = f64::INFINITY;
    let mut t_monotone_min = f64::INFINITY;
    for _ in 0..samples {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let nu = ds_norm_sq_nodal(&system.mesh, &u, s)?;
        let nv = ds_norm_sq_nodal(&system.mesh, &v, s)?;
        coercivity_margin = coercivity_margin.min(system.form(&u, &u) - lo * nu);
        boundedness_margin = boundedness_margin.min(hi * (nu * nv).sqrt() - system.form(&v, &u).abs());
        let vp: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
        if vp.iter().any(|x| *x > 0.0) {
            t_monotone_min = t_monotone_min.min(system.form(&vp, &v));
        }
    }
    Ok(FormInvariants {
        samples,
        coercivity_margin,
        boundedness_margin,
        t_monotone_min,
        pass: coercivity_margin >= -FORM_SLACK && boundedness_margin >= -FORM_SLACK && t_monotone_min > 0.0,
    })
}
