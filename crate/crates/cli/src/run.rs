//! Command execution: config in, tables and a JSON summary out. Nothing here touches the disk.

use std::time::Instant;

use serde_json::{json, Value};

use fracobs::analysis::{
    check_ls_membranes, check_ls_one, check_ls_two, penalization_error_study, s_to_one_study, LSReport,
};
use fracobs::capacity::capacitary_potential;
use fracobs::capacity::capacity_bounds_check;
use fracobs::discretization::{add_mass, AssemblyOptions, ClampReport, DiscreteSystem, LoadData, ScalarField};
use fracobs::exec::Exec;
use fracobs::kernels::{builtin_kernel, ka_band_scan, kappa_integrand, CoefficientField, Kernel};
use fracobs::mesh::Mesh;
use fracobs::solvers::*;
use fracobs::verify::{run_verify, VerifyOptions};
use fracobs::{Error, Result};

use crate::config::{Command, ExperimentConfig, Field, KaField, Method};

/// One CSV file: header plus rows of already formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: &str, header: &[&str]) -> Self {
        Self { file: file.to_string(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    fn with_header(file: &str, header: Vec<String>) -> Self {
        Self { file: file.to_string(), header, rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Comma-separated, `.` decimal, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 cells")
    }
}

/// Shortest round-trip text of `v`, in exponent form when very small or large.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e7).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn flag(b: bool) -> String {
    u8::from(b).to_string()
}

/// Everything a command produced.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub tables: Vec<Table>,
    pub summary: Value,
    pub converged: bool,
    /// `Some(false)` when a check-style command found a failing check.
    pub passed: Option<bool>,
    pub clamp: Option<ClampReport>,
    /// Printed on stdout.
    pub stdout: String,
    pub matrix: Option<String>,
    pub timings: Vec<(String, f64)>,
}

struct Clock {
    start: Instant,
    phases: Vec<(String, f64)>,
}

impl Clock {
    fn new() -> Self {
        Self { start: Instant::now(), phases: Vec::new() }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.phases.push((name.to_string(), (now - self.start).as_secs_f64()));
        self.start = now;
    }
}

fn scalar_field(f: &Field) -> ScalarField {
    match f {
        Field::Expr(e) => {
            let e = e.clone();
            ScalarField::function(move |x| e.eval(x))
        }
        Field::Nodal(v) => ScalarField::Nodal(v.clone()),
    }
}

fn nodal(mesh: &Mesh, f: &Field, what: &str) -> Result<Vec<f64>> {
    let v = scalar_field(f).nodal(mesh)?;
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain(format!("{what} evaluates to NaN on the mesh")));
    }
    Ok(v)
}

fn mesh(cfg: &ExperimentConfig) -> Result<Mesh> {
    Mesh::new(cfg.domain[0], cfg.domain[1], cfg.n)
}

fn kernel(cfg: &ExperimentConfig) -> Result<Kernel> {
    builtin_kernel(&cfg.kernel.name, cfg.s, Some(cfg.kernel.factor))
}

fn system(cfg: &ExperimentConfig, exec: Exec, art: &mut Artifacts) -> Result<DiscreteSystem> {
    let mesh = mesh(cfg)?;
    let data = LoadData { f_sharp: scalar_field(&cfg.data.f), f_vec: cfg.data.f_vec.as_ref().map(scalar_field) };
    let opts = AssemblyOptions { exec, exact_fractional: true };
    let mut sys = DiscreteSystem::assemble_with(mesh, &kernel(cfg)?, &data, &opts)?;
    if cfg.solver.lambda > 0.0 {
        sys = add_mass(&sys, cfg.solver.lambda)?;
    }
    art.clamp = Some(sys.clamp);
    if cfg.dump_matrix {
        let mut buf = Vec::new();
        sys.write_csv(&mut buf).expect("in-memory write");
        art.matrix = Some(String::from_utf8(buf).expect("ascii"));
    }
    Ok(sys)
}

fn psor_options(cfg: &ExperimentConfig) -> PsorOptions {
    PsorOptions { omega: cfg.solver.omega, tol: cfg.solver.tol, max_iter: cfg.solver.max_iter, ..PsorOptions::default() }
}

fn newton_options(cfg: &ExperimentConfig) -> NewtonOptions {
    NewtonOptions { tol: cfg.solver.tol, ..NewtonOptions::default() }
}

fn ls_json(r: Option<LSReport>) -> Value {
    match r {
        Some(r) => json!({
            "lower_violation": r.lower_violation,
            "upper_violation": r.upper_violation,
            "tol": r.tol,
            "pass": r.pass,
        }),
        None => Value::Null,
    }
}

fn ls_tol(sys: &DiscreteSystem) -> f64 {
    1e-6 * sys.load.iter().fold(0.0f64, |m, b| m.max(b.abs())).max(f64::MIN_POSITIVE)
}

fn solve_json(r: &SolveResult) -> Value {
    json!({
        "method": r.method,
        "iterations": r.iterations,
        "converged": r.converged,
        "active_lower": r.active_lower.len(),
        "active_upper": r.active_upper.len(),
        "final_update": r.history.last().copied(),
    })
}

/// Runs `cfg.command`.
pub fn execute(cfg: &ExperimentConfig, exec: Exec) -> Result<Artifacts> {
    let mut art = Artifacts { converged: true, ..Artifacts::default() };
    let mut clock = Clock::new();
    match cfg.command {
        Command::Solve => solve(cfg, exec, &mut art, &mut clock)?,
        Command::Solve2 => solve2(cfg, exec, &mut art, &mut clock)?,
        Command::Membranes => membranes(cfg, exec, &mut art, &mut clock)?,
        Command::Penalize => penalize(cfg, exec, &mut art, &mut clock)?,
        Command::SweepS => sweep(cfg, exec, &mut art, &mut clock)?,
        Command::KernelKa => kernel_ka(cfg, exec, &mut art, &mut clock)?,
        Command::Capacity => capacity(cfg, exec, &mut art, &mut clock)?,
        Command::Verify => verify(cfg, exec, &mut art, &mut clock),
    }
    art.timings = clock.phases;
    Ok(art)
}

fn solve(cfg: &ExperimentConfig, exec: Exec, art: &mut Artifacts, clock: &mut Clock) -> Result<()> {
    let sys = system(cfg, exec, art)?;
    clock.lap("assemble");
    let psi = nodal(&sys.mesh, cfg.obstacles.psi.as_ref().expect("validated"), "obstacles.psi")?;
    let r = match cfg.solver.method {
        Method::Psor => solve_psor(&sys, &ObstacleSet::lower(psi.clone()), &psor_options(cfg))?,
        m => {
            let config = PenalizationConfig {
                theta: cfg.solver.theta(),
                epsilon: cfg.solver.epsilon[0],
                zeta: minimal_zeta(&sys, &psi),
            };
            if m == Method::Penalty {
                solve_penalized(&sys, &psi, &config, &newton_options(cfg))?
            } else {
                solve_penalized_lower(&sys, &psi, &config, &newton_options(cfg))?
            }
        }
    };
    clock.lap("solve");
    let ls = (cfg.solver.method == Method::Psor && r.converged && psi.iter().all(|v| is_bound(*v)))
        .then(|| check_ls_one(&sys, &psi, &r, ls_tol(&sys)))
        .transpose()?;
    let mut t = Table::new("result.csv", &["x", "u", "psi", "residual", "active"]);
    for i in 0..sys.n() {
        t.push(vec![
            num(sys.mesh.dof_x(i)),
            num(r.u[i]),
            num(psi[i]),
            num(r.residual[i]),
            flag(r.active_lower.contains(&i)),
        ]);
    }
    art.tables.push(t);
    art.converged = r.converged;
    art.summary = json!({ "solve": solve_json(&r), "lewy_stampacchia": ls_json(ls) });
    Ok(())
}

fn solve2(cfg: &ExperimentConfig, exec: Exec, art: &mut Artifacts, clock: &mut Clock) -> Result<()> {
    let sys = system(cfg, exec, art)?;
    clock.lap("assemble");
    let psi = nodal(&sys.mesh, cfg.obstacles.psi.as_ref().expect("validated"), "obstacles.psi")?;
    let phi = nodal(&sys.mesh, cfg.obstacles.phi.as_ref().expect("validated"), "obstacles.phi")?;
    let obstacles = ObstacleSet::two_sided(psi.clone(), phi.clone());
    let method = match cfg.solver.method {
        Method::Psor => TwoObstacleMethod::Psor(psor_options(cfg)),
        _ => TwoObstacleMethod::Penalized(
            TwoPenaltyConfig {
                theta: cfg.solver.theta(),
                epsilon: cfg.solver.epsilon[0],
                zeta_lower: minimal_zeta(&sys, &psi),
                zeta_upper: minimal_zeta_upper(&sys, &phi),
            },
            newton_options(cfg),
        ),
    };
    let r = solve_two_obstacles(&sys, &obstacles, &method)?;
    clock.lap("solve");
    let finite = psi.iter().chain(&phi).all(|v| is_bound(*v));
    let ls = (cfg.solver.method == Method::Psor && r.converged && finite)
        .then(|| check_ls_two(&sys, &psi, &phi, &r, ls_tol(&sys)))
        .transpose()?;
    let mut t = Table::new("result.csv", &["x", "u", "psi", "phi", "residual", "active_lower", "active_upper"]);
    for i in 0..sys.n() {
        t.push(vec![
            num(sys.mesh.dof_x(i)),
            num(r.u[i]),
            num(psi[i]),
            num(phi[i]),
            num(r.residual[i]),
            flag(r.active_lower.contains(&i)),
            flag(r.active_upper.contains(&i)),
        ]);
    }
    art.tables.push(t);
    art.converged = r.converged;
    art.summary = json!({ "solve": solve_json(&r), "lewy_stampacchia": ls_json(ls) });
    Ok(())
}

fn membranes(cfg: &ExperimentConfig, exec: Exec, art: &mut Artifacts, clock: &mut Clock) -> Result<()> {
    let sys = system(cfg, exec, art)?;
    clock.lap("assemble");
    let h = sys.mesh.h();
    // Loads are densities, lumped like f.
    let loads = cfg
        .obstacles
        .loads
        .iter()
        .enumerate()
        .map(|(k, f)| Ok(nodal(&sys.mesh, f, &format!("obstacles.loads[{k}]"))?.iter().map(|v| v * h).collect()))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let method = match cfg.solver.method {
        Method::Psor => MembraneMethod::Gs { omega: cfg.solver.omega, tol: cfg.solver.tol, max_sweeps: cfg.solver.max_iter },
        _ => MembraneMethod::Penalized {
            theta: cfg.solver.theta(),
            epsilon: cfg.solver.epsilon[0],
            newton: newton_options(cfg),
        },
    };
    let r = solve_n_membranes(&sys, &loads, &method)?;
    clock.lap("solve");
    let ls = if cfg.solver.method == Method::Psor && r.converged {
        let tol = 1e-6 * loads.iter().flatten().fold(0.0f64, |m, b| m.max(b.abs())).max(f64::MIN_POSITIVE);
        Some(check_ls_membranes(&sys, &loads, &r, tol)?)
    } else {
        None
    };
    let count = loads.len();
    let mut header = vec!["x".to_string()];
    header.extend((1..=count).map(|k| format!("u{k}")));
    header.extend((1..=count).map(|k| format!("residual{k}")));
    let mut t = Table::with_header("result.csv", header);
    for i in 0..sys.n() {
        let mut row = vec![num(sys.mesh.dof_x(i))];
        row.extend(r.u.iter().map(|u| num(u[i])));
        row.extend(r.residuals.iter().map(|res| num(res[i])));
        t.push(row);
    }
    art.tables.push(t);
    art.converged = r.converged;
    art.summary = json!({
        "membranes": count,
        "iterations": r.iterations,
        "converged": r.converged,
        "final_update": r.history.last().copied(),
        "lewy_stampacchia": ls.map(|v| v.into_iter().map(|r| ls_json(Some(r))).collect::<Vec<_>>()),
    });
    Ok(())
}

fn penalize(cfg: &ExperimentConfig, exec: Exec, art: &mut Artifacts, clock: &mut Clock) -> Result<()> {
    let sys = system(cfg, exec, art)?;
    clock.lap("assemble");
    let psi = nodal(&sys.mesh, cfg.obstacles.psi.as_ref().expect("validated"), "obstacles.psi")?;
    let study = penalization_error_study(&sys, &psi, cfg.solver.theta(), &cfg.solver.epsilon)?;
    clock.lap("study");
    let mut t = Table::new("result.csv", &["epsilon", "error", "bound", "ratio", "converged"]);
    for r in &study.rows {
        let ratio = if r.bound > 0.0 { r.error / r.bound } else { 0.0 };
        t.push(vec![num(r.epsilon), num(r.error), num(r.bound), num(ratio), flag(r.converged)]);
    }
    art.tables.push(t);
    art.converged = study.rows.iter().all(|r| r.converged);
    art.summary = json!({
        "theta": cfg.solver.theta,
        "zeta_l1": study.zeta_l1,
        "bound_holds": study.bound_holds,
        "monotone": study.monotone,
        "pass": study.pass(),
    });
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, exec: Exec, art: &mut Artifacts, clock: &mut Clock) -> Result<()> {
    let mesh = mesh(cfg)?;
    let psi = nodal(&mesh, cfg.obstacles.psi.as_ref().expect("validated"), "obstacles.psi")?;
    let f = nodal(&mesh, &cfg.data.f, "data.f")?;
    let study = s_to_one_study(&mesh, &psi, &f, &cfg.sweep.s_list, exec)?;
    clock.lap("sweep");
    let mut t = Table::new("result.csv", &["s", "l2_distance", "max_distance", "h", "converged"]);
    for r in &study.records {
        t.push(vec![num(r.s), num(r.l2_distance), num(r.max_distance), num(r.h), flag(r.converged)]);
    }
    let mut header = vec!["x".to_string(), "classical".to_string()];
    header.extend(study.records.iter().map(|r| format!("s={}", r.s)));
    let mut profiles = Table::with_header("profiles.csv", header);
    for i in 0..mesh.n() {
        let mut row = vec![num(mesh.dof_x(i)), num(study.reference[i])];
        row.extend(study.records.iter().map(|r| num(r.u[i])));
        profiles.push(row);
    }
    art.tables.push(t);
    art.tables.push(profiles);
    art.converged = study.reference_converged && study.records.iter().all(|r| r.converged);
    art.summary = json!({
        "kernel": "ds_energy",
        "endpoint_decrease": study.endpoint_decrease,
        "interior_monotone": study.interior_monotone,
        "reference_converged": study.reference_converged,
    });
    Ok(())
}

fn coefficient(field: &KaField) -> Result<CoefficientField> {
    match field {
        KaField::Counterexample => Ok(CoefficientField::counterexample()),
        KaField::Constant(c) => CoefficientField::constant(*c),
        KaField::Expr(e) => {
            let e2 = e.clone();
            CoefficientField::new(e.source(), move |z| e2.eval(z), Vec::new())
        }
    }
}

fn kernel_ka(cfg: &ExperimentConfig, exec: Exec, art: &mut Artifacts, clock: &mut Clock) -> Result<()> {
    let field = coefficient(&cfg.ka.field)?;
    let pairs: Vec<(f64, f64)> = cfg.ka.pairs.iter().map(|[x, y]| (*x, *y)).collect();
    let scan = ka_band_scan(&field, cfg.s, &pairs, exec);
    clock.lap("scan");
    let mut t = Table::new("result.csv", &["x", "y", "value", "normalized_value", "est_abs_error", "negative", "error"]);
    for e in &scan.entries {
        let (value, err, msg) = match &e.evaluation {
            Ok(ev) => (num(ev.value), num(ev.est_abs_error), String::new()),
            Err(err) => (String::new(), String::new(), err.to_string()),
        };
        t.push(vec![num(e.x), num(e.y), value, e.normalized.map(num).unwrap_or_default(), err, flag(e.negative), msg]);
    }
    art.tables.push(t);
    if let Some(&(x, y)) = pairs.first() {
        let mut k = Table::new("kappa.csv", &["x", "y", "z", "kappa"]);
        for &z in &cfg.ka.z {
            k.push(vec![num(x), num(y), num(z), num(kappa_integrand(x, y, z, cfg.s)?)]);
        }
        art.tables.push(k);
    }
    art.summary = json!({
        "field": field.description(),
        "pairs": pairs.len(),
        "negative_pairs": scan.entries.iter().filter(|e| e.negative).count(),
        "failed_pairs": scan.entries.iter().filter(|e| e.evaluation.is_err()).count(),
        "min_normalized": scan.min_normalized,
        "max_normalized": scan.max_normalized,
    });
    Ok(())
}

fn capacity(cfg: &ExperimentConfig, exec: Exec, art: &mut Artifacts, clock: &mut Clock) -> Result<()> {
    let mesh = mesh(cfg)?;
    let sets = cfg.capacity.compact_sets();
    let mut t = Table::new(
        "result.csv",
        &[
            "set", "kernel", "h", "s", "C_s", "C_s_a", "mu_total", "mu_on_set", "mu_off_support", "energy",
            "lower_margin", "upper_margin", "pass",
        ],
    );
    let mut all_pass = true;
    let mut converged = true;
    for name in &cfg.capacity.kernels {
        let k = builtin_kernel(name, cfg.s, Some(cfg.kernel.factor))?;
        let a = fracobs::discretization::assemble_stiffness_with(&mesh, &k, &AssemblyOptions { exec, exact_fractional: true })?;
        let sys = DiscreteSystem::new(mesh, a.matrix, vec![0.0; mesh.n()], (k.a_lower(), k.a_upper()))?.with_order(cfg.s);
        for set in &sets {
            let pot = capacitary_potential(&sys, set, 1e-12)?;
            let rep = capacity_bounds_check(set, &k, &mesh)?;
            converged &= pot.converged;
            all_pass &= rep.pass;
            t.push(vec![
                set.describe(),
                name.clone(),
                num(mesh.h()),
                num(cfg.s),
                num(rep.c_s),
                num(rep.c_sa),
                num(pot.total_measure()),
                num(pot.measure_on_set()),
                num(pot.measure_off_support(&mesh)),
                num(sys.form(&pot.potential, &pot.potential)),
                num(rep.lower_margin),
                num(rep.upper_margin),
                flag(rep.pass),
            ]);
        }
    }
    clock.lap("capacity");
    art.tables.push(t);
    art.converged = converged;
    art.summary = json!({ "sets": sets.len(), "kernels": cfg.capacity.kernels, "bounds_hold": all_pass });
    Ok(())
}

fn verify(cfg: &ExperimentConfig, exec: Exec, art: &mut Artifacts, clock: &mut Clock) {
    let opts = VerifyOptions { seed: cfg.verify.seed, instances: cfg.verify.instances, n: cfg.verify.n, exec };
    let report = run_verify(&opts);
    clock.lap("verify");
    let mut t = Table::new("result.csv", &["check", "pass", "detail"]);
    for l in &report.lines {
        t.push(vec![l.name.clone(), flag(l.pass), l.detail.clone()]);
    }
    art.tables.push(t);
    art.passed = Some(report.all_pass());
    art.stdout = report.table();
    art.summary = json!({
        "checks": report.lines.len(),
        "failed": report.lines.iter().filter(|l| !l.pass).map(|l| l.name.clone()).collect::<Vec<_>>(),
        "all_pass": report.all_pass(),
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_dialect() {
        let mut t = Table::new("t.csv", &["a", "b"]);
        t.push(vec!["1".into(), "x, y".into()]);
        assert_eq!(t.to_csv(), "a,b\n1,\"x, y\"\n");
    }

    #[test]
    fn number_format_round_trips() {
        for v in [0.0, -0.5, 1e-12, 3.25e9, 0.1 + 0.2, -7.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(1e-12), "1e-12");
        assert_eq!(num(-0.5), "-0.5");
    }
}
