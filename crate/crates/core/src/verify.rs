//! The invariant suite behind `fracobs verify`: a fixed list of checks over seeded instances,
//! reported as a deterministic table.

use std::fmt::Write as _;

use crate::analysis::*;
use crate::capacity::{capacitary_potential, CompactSet1D};
use crate::error::Result;
use crate::exec::Exec;
use crate::fractional::{fractional_laplacian_constant, riesz_constant, PenaltyFunction};
use crate::instances::{lumped, obstacle_instance, random_membrane_loads};
use crate::kernels::{builtin_kernel, ka_evaluate, CoefficientField};
use crate::mesh::Mesh;
use crate::solvers::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random instances per family.
    pub instances: usize,
    /// Dofs for the Lewy–Stampacchia and property checks.
    pub n: usize,
    pub exec: Exec,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 1, instances: 8, n: 32, exec: Exec::Parallel }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub lines: Vec<CheckLine>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    fn push(&mut self, name: &str, pass: bool, detail: String) {
        self.lines.push(CheckLine { name: name.to_string(), pass, detail });
    }

    /// Fixed-width text table, one line per check.
    pub fn table(&self) -> String {
        let width = self.lines.iter().map(|l| l.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for l in &self.lines {
            let _ = writeln!(out, "{:<width$}  {}  {}", l.name, if l.pass { "PASS" } else { "FAIL" }, l.detail);
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("check,pass,detail\n");
        for l in &self.lines {
            let _ = writeln!(out, "{},{},\"{}\"", l.name, l.pass, l.detail.replace('"', "'"));
        }
        out
    }
}

fn worst(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0f64, f64::max)
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    worst(a.iter().zip(b).map(|(x, y)| (x - y).abs()))
}

fn norm_inf(v: &[f64]) -> f64 {
    worst(v.iter().map(|x| x.abs()))
}

/// Runs every check; errors inside a check are reported as a failing line, not propagated.
pub fn run_verify(opts: &VerifyOptions) -> VerifyReport {
    let mut report = VerifyReport::default();
    let checks: [(&str, fn(&VerifyOptions) -> Result<(bool, String)>); 16] = [
        ("constants", check_constants),
        ("penalty_catalog", check_penalties),
        ("ka_counterexample", check_counterexample),
        ("assembly_paths", check_assembly_paths),
        ("form_invariants", check_forms),
        ("psor_vs_oracle", check_psor_oracle),
        ("two_obstacles_vs_oracle", check_two_oracle),
        ("membranes_vs_oracle", check_membrane_oracle),
        ("ls_one", check_ls_one_suite),
        ("ls_two", check_ls_two_suite),
        ("ls_membranes", check_ls_membrane_suite),
        ("order_properties", check_order_properties),
        ("uniqueness", check_uniqueness),
        ("penalization_bound", check_penalization),
        ("capacity_identity", check_capacity),
        ("s_to_one", check_s_to_one),
    ];
    for (name, f) in checks {
        log::info!("verify: {name}");
        match f(opts) {
            Ok((pass, detail)) => report.push(name, pass, detail),
            Err(e) => report.push(name, false, format!("error: {e}")),
        }
    }
    report
}

fn check_constants(_: &VerifyOptions) -> Result<(bool, String)> {
    let c = riesz_constant(1, 0.5)?;
    let big = fractional_laplacian_constant(1, 0.5)?;
    let err = (c - 0.199471140200716).abs().max((big / (c * c) - 8.0).abs());
    Ok((err < 1e-12, format!("max_err={err:.3e}")))
}

fn check_penalties(_: &VerifyOptions) -> Result<(bool, String)> {
    let mut worst_lip = 0.0f64;
    for p in PenaltyFunction::ALL {
        worst_lip = worst_lip.max(p.validate(2000)?);
    }
    Ok((true, format!("max_observed_lipschitz={worst_lip:.6}")))
}

fn check_counterexample(_: &VerifyOptions) -> Result<(bool, String)> {
    let e = ka_evaluate(&CoefficientField::counterexample(), -0.5, 0.5, 0.8)?;
    Ok((e.value < 0.0, format!("ka={:.10e}", e.value)))
}

fn check_assembly_paths(o: &VerifyOptions) -> Result<(bool, String)> {
    let mesh = Mesh::new(-1.0, 1.0, 8)?;
    let gap = assembly_cross_check(&mesh, &builtin_kernel("sin_diff", 0.45, None)?, o.exec)?;
    Ok((gap <= 1e-5, format!("max_rel_gap={gap:.3e}")))
}

fn check_forms(o: &VerifyOptions) -> Result<(bool, String)> {
    let mut ok = true;
    let mut detail = String::new();
    for (k, name) in ["fractional", "sin_cos"].iter().enumerate() {
        let kernel = builtin_kernel(name, 0.55, None)?;
        let sys = crate::discretization::DiscreteSystem::assemble(Mesh::new(-1.0, 1.0, 16)?, &kernel, &crate::discretization::LoadData::zero())?;
        let inv = form_invariants(&sys, 50, o.seed + k as u64)?;
        let clamp_frac = sys.clamp.total / sys.stiffness.amax();
        ok &= inv.pass && clamp_frac <= 1e-6;
        let _ = write!(
            detail,
            "{name}:coerc={:.3e},bound={:.3e},tmono={:.3e},clamp={:.1e} ",
            inv.coercivity_margin, inv.boundedness_margin, inv.t_monotone_min, clamp_frac
        );
    }
    Ok((ok, detail.trim_end().to_string()))
}

fn seeds(o: &VerifyOptions, family: u64) -> Vec<u64> {
    (0..o.instances as u64).map(|k| o.seed.wrapping_mul(1000).wrapping_add(family * 100 + k)).collect()
}

/// Runs `f` over the family's seeds in parallel and folds to (all pass, worst metric).
fn over_seeds<F>(o: &VerifyOptions, family: u64, f: F) -> Result<(bool, f64)>
where
    F: Fn(u64) -> Result<(bool, f64)> + Sync + Send,
{
    let seeds = seeds(o, family);
    let results = o.exec.map(seeds.len(), |k| f(seeds[k]));
    let mut ok = true;
    let mut w = 0.0f64;
    for r in results {
        let (p, v) = r?;
        ok &= p;
        w = w.max(v);
    }
    Ok((ok, w))
}

fn check_psor_oracle(o: &VerifyOptions) -> Result<(bool, String)> {
    let (ok, w) = over_seeds(o, 1, |seed| {
        let inst = obstacle_instance(seed, 2 + seed as usize % 7, &[])?;
        let obs = ObstacleSet::lower(inst.psi);
        let exact = lcp_oracle(&inst.system, &obs)?;
        let r = solve_psor(&inst.system, &obs, &PsorOptions::default())?;
        let gap = max_gap(&r.u, &exact.u);
        Ok((r.converged && gap <= 1e-8, gap))
    })?;
    Ok((ok, format!("max_gap={w:.3e}")))
}

fn check_two_oracle(o: &VerifyOptions) -> Result<(bool, String)> {
    let (ok, w) = over_seeds(o, 2, |seed| {
        let inst = obstacle_instance(seed, 2 + seed as usize % 7, &[])?;
        let obs = ObstacleSet::two_sided(inst.psi, inst.phi);
        let exact = lcp_oracle(&inst.system, &obs)?;
        let r = solve_two_obstacles(&inst.system, &obs, &TwoObstacleMethod::Psor(PsorOptions::default()))?;
        let gap = max_gap(&r.u, &exact.u);
        Ok((r.converged && gap <= 1e-8, gap))
    })?;
    Ok((ok, format!("max_gap={w:.3e}")))
}

fn membrane_loads(inst: &crate::instances::ObstacleInstance, count: usize) -> Vec<Vec<f64>> {
    random_membrane_loads(inst.seed, &inst.system.mesh, count).iter().map(|f| lumped(&inst.system, f)).collect()
}

fn check_membrane_oracle(o: &VerifyOptions) -> Result<(bool, String)> {
    let (ok, w) = over_seeds(o, 3, |seed| {
        let inst = obstacle_instance(seed, 6, &[])?;
        let loads = membrane_loads(&inst, 2 + seed as usize % 2);
        let exact = membranes_oracle(&inst.system, &loads)?;
        let r = solve_n_membranes(&inst.system, &loads, &MembraneMethod::default())?;
        let gap = worst(r.u.iter().zip(&exact).map(|(a, b)| max_gap(a, b)));
        Ok((r.converged && gap <= 1e-8, gap))
    })?;
    Ok((ok, format!("max_gap={w:.3e}")))
}

fn ls_tol(load: &[f64]) -> f64 {
    1e-6 * norm_inf(load)
}

fn check_ls_one_suite(o: &VerifyOptions) -> Result<(bool, String)> {
    let (ok, w) = over_seeds(o, 4, |seed| {
        let inst = obstacle_instance(seed, o.n, &[])?;
        let r = solve_psor(&inst.system, &ObstacleSet::lower(inst.psi.clone()), &PsorOptions::default())?;
        let rep = check_ls_one(&inst.system, &inst.psi, &r, ls_tol(&inst.system.load))?;
        Ok((rep.pass, rep.lower_violation.max(rep.upper_violation)))
    })?;
    Ok((ok, format!("max_violation={w:.3e}")))
}

fn check_ls_two_suite(o: &VerifyOptions) -> Result<(bool, String)> {
    let (ok, w) = over_seeds(o, 5, |seed| {
        let inst = obstacle_instance(seed, o.n, &[])?;
        let obs = ObstacleSet::two_sided(inst.psi.clone(), inst.phi.clone());
        let r = solve_two_obstacles(&inst.system, &obs, &TwoObstacleMethod::Psor(PsorOptions::default()))?;
        let rep = check_ls_two(&inst.system, &inst.psi, &inst.phi, &r, ls_tol(&inst.system.load))?;
        Ok((rep.pass, rep.lower_violation.max(rep.upper_violation)))
    })?;
    Ok((ok, format!("max_violation={w:.3e}")))
}

fn check_ls_membrane_suite(o: &VerifyOptions) -> Result<(bool, String)> {
    let (ok, w) = over_seeds(o, 6, |seed| {
        let inst = obstacle_instance(seed, o.n, &[])?;
        let loads = membrane_loads(&inst, 2 + seed as usize % 2);
        let r = solve_n_membranes(&inst.system, &loads, &MembraneMethod::default())?;
        let tol = ls_tol(&loads.concat());
        let reps = check_ls_membranes(&inst.system, &loads, &r, tol)?;
        Ok((reps.iter().all(|r| r.pass), worst(reps.iter().map(|r| r.lower_violation.max(r.upper_violation)))))
    })?;
    Ok((ok, format!("max_violation={w:.3e}")))
}

/// Ordered data perturbation shared by the property checks.
fn perturbation(n: usize, seed: u64) -> Vec<f64> {
    (0..n).map(|i| 0.05 * (1.0 + ((i as u64 * 7 + seed) % 5) as f64)).collect()
}

fn check_order_properties(o: &VerifyOptions) -> Result<(bool, String)> {
    let (ok, w) = over_seeds(o, 7, |seed| {
        let inst = obstacle_instance(seed, o.n, &[])?;
        let sys = &inst.system;
        let d = perturbation(sys.n(), seed);
        let b_hat: Vec<f64> = sys.load.iter().zip(&d).map(|(b, d)| b - d * sys.mesh.h()).collect();
        let psi_hat: Vec<f64> = inst.psi.iter().zip(&d).map(|(p, d)| p - d).collect();
        let cmp = comparison_principle(sys, &b_hat, &inst.psi, &psi_hat, 1e-8)?;
        let neg = sys.with_load(sys.load.iter().map(|b| -b.abs()).collect())?;
        let wmp = weak_maximum_principle(&neg, &inst.psi, 1e-8)?;
        let linf = linf_obstacle_dependence(sys, &ObstacleSet::lower(inst.psi.clone()), &ObstacleSet::lower(psi_hat.clone()), 1e-8)?;
        let phi_hat: Vec<f64> = inst.phi.iter().zip(&d).map(|(p, d)| p + d).collect();
        let linf2 = linf_obstacle_dependence(
            sys,
            &ObstacleSet::two_sided(inst.psi.clone(), inst.phi.clone()),
            &ObstacleSet::two_sided(psi_hat, phi_hat),
            1e-8,
        )?;
        let el = e_lambda_bounds(sys, 1.5, &inst.f, &inst.psi, 1e-8)?;
        let all = [cmp, wmp, linf, linf2, el];
        Ok((all.iter().all(|r| r.pass), worst(all.iter().map(|r| r.violation))))
    })?;
    Ok((ok, format!("max_violation={w:.3e}")))
}

fn check_uniqueness(o: &VerifyOptions) -> Result<(bool, String)> {
    let (ok, w) = over_seeds(o, 8, |seed| {
        let inst = obstacle_instance(seed, o.n, &[])?;
        let r = uniqueness_check(&inst.system, &inst.psi, 1e-7)?;
        Ok((r.pass, r.violation))
    })?;
    Ok((ok, format!("max_gap={w:.3e}")))
}

fn check_penalization(o: &VerifyOptions) -> Result<(bool, String)> {
    let (ok, w) = over_seeds(o, 9, |seed| {
        let inst = obstacle_instance(seed, o.n, &[0.4, 0.6, 0.8])?;
        let st = penalization_error_study(&inst.system, &inst.psi, PenaltyFunction::Rational, &[0.1, 0.05, 0.025])?;
        let ratio = worst(st.rows.iter().filter(|r| r.bound > 0.0).map(|r| r.error / r.bound));
        Ok((st.pass(), ratio))
    })?;
    Ok((ok, format!("max_error_over_bound={w:.6}")))
}

fn check_capacity(_: &VerifyOptions) -> Result<(bool, String)> {
    let kernel = builtin_kernel("sin_cos", 0.5, None)?;
    let sys = crate::discretization::DiscreteSystem::assemble(Mesh::new(-1.0, 1.0, 31)?, &kernel, &crate::discretization::LoadData::zero())?;
    let r = capacitary_potential(&sys, &CompactSet1D::interval(-0.25, 0.25)?, 1e-12)?;
    let rel = (r.capacity - r.total_measure()).abs() / r.capacity;
    let bounds = r.potential.iter().all(|u| *u >= -1e-8 && *u <= 1.0 + 1e-8);
    let support = r.measure_off_support(&sys.mesh) <= 1e-6 * r.measure.iter().map(|m| m.abs()).sum::<f64>();
    Ok((r.converged && rel <= 1e-6 && bounds && support, format!("capacity={:.10e},rel_gap={rel:.3e}", r.capacity)))
}

fn check_s_to_one(o: &VerifyOptions) -> Result<(bool, String)> {
    let mesh = Mesh::new(-1.0, 1.0, 39)?;
    let psi = mesh.interpolate(|x| 0.2 - x * x);
    let st = s_to_one_study(&mesh, &psi, &vec![-1.0; 39], &[0.6, 0.99], o.exec)?;
    let (a, b) = (st.records[0].l2_distance, st.records[1].l2_distance);
    Ok((st.endpoint_decrease && st.reference_converged, format!("l2_s0.6={a:.6e},l2_s0.99={b:.6e}")))
}
