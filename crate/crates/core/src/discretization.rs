//! P1 finite-element assembly of the nonlocal stiffness matrix, lumped mass and load vectors.
//!
//! Two quadrature paths are provided. [`assemble_stiffness`] integrates the nonsymmetric form
//! `∬ φ_i(x)(φ_j(x) - φ_j(y)) a(x, y)` with the exterior folded into a one-dimensional
//! `κ_ext(x) = ∫_{Ω^c} a(x, y) dy`; [`assemble_stiffness_symmetric`] integrates the double
//! difference `½ ∬ (φ_i(x) - φ_i(y))(φ_j(x) - φ_j(y)) a` over the plane with ghost elements
//! outside the domain. Translation-invariant kernels take the exact Toeplitz route by default.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{domain, usage, Error, Result};
use crate::exec::Exec;
use crate::fractional::{check_order, hat_gradient_raw, hat_interactions, riesz_constant};
use crate::kernels::{Kernel, KernelKind};
use crate::mesh::Mesh;
use crate::quad::{adaptive, GaussRule, QuadTol};

/// Exterior kernel mass beyond this multiple of the domain length is taken with the kernel
/// profile frozen at the cutoff.
pub const CUTOFF_FACTOR: f64 = 10.0;
/// Relative size (to `max |A|`) below which positive off-diagonal entries are clamped to zero.
pub const CLAMP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    pub exec: Exec,
    /// Use the closed-form Toeplitz matrix for `b ≡ const` kernels.
    pub exact_fractional: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { exec: Exec::Parallel, exact_fractional: true }
    }
}

/// Positive off-diagonal entries removed to keep the Z-matrix structure.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClampReport {
    pub clamped: usize,
    pub total: f64,
    pub max: f64,
    /// Largest positive off-diagonal above the clamp threshold (left in place). Nonzero for the
    /// fractional kernel when `s` is below about 0.237, whatever the mesh.
    pub unclamped_positive: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stiffness {
    pub matrix: DMatrix<f64>,
    pub clamp: ClampReport,
}

/// Value of the hat of dof `k` at `x`.
#[inline]
fn hat(mesh: &Mesh, k: usize, x: f64) -> f64 {
    (1.0 - (x - mesh.dof_x(k)).abs() / mesh.h()).max(0.0)
}

/// Elements carrying the hat of dof `i`.
#[inline]
fn support(i: usize) -> [usize; 2] {
    [i, i + 1]
}

fn dofs_of(mesh: &Mesh, e: usize, f: usize) -> Vec<usize> {
    let mut v: Vec<usize> = mesh.element_dofs(e).dofs().chain(mesh.element_dofs(f).dofs()).collect();
    v.sort_unstable();
    v.dedup();
    v
}

struct Rules {
    /// Jacobi weight `t^{1-2s}` on `[0, 1]`.
    w1: GaussRule,
    /// Jacobi weight `t^{2-2s}`.
    w2: GaussRule,
    gl12: GaussRule,
    gl10: GaussRule,
    gl8: GaussRule,
    gl5: GaussRule,
}

impl Rules {
    fn new(s: f64) -> Self {
        Self {
            w1: GaussRule::jacobi(12, 1.0 - 2.0 * s),
            w2: GaussRule::jacobi(12, 2.0 - 2.0 * s),
            gl12: GaussRule::legendre(12),
            gl10: GaussRule::legendre(10),
            gl8: GaussRule::legendre(8),
            gl5: GaussRule::legendre(5),
        }
    }

    fn separated(&self, gap: usize) -> &GaussRule {
        if gap <= 2 {
            &self.gl8
        } else {
            &self.gl5
        }
    }
}

fn finite_or_fail(v: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NumericalFailure(what()))
    }
}

/// `A[i][j] = E_a(φ_j, φ_i)` from the nonsymmetric form.
pub fn assemble_stiffness(mesh: &Mesh, kernel: &Kernel) -> Result<Stiffness> {
    assemble_stiffness_with(mesh, kernel, &AssemblyOptions::default())
}

pub fn assemble_stiffness_with(mesh: &Mesh, kernel: &Kernel, opts: &AssemblyOptions) -> Result<Stiffness> {
    if let (true, KernelKind::Fractional { scale }) = (opts.exact_fractional, kernel.kind()) {
        return Ok(clamp(exact_fractional(mesh, kernel.s(), kernel.c2() * scale)));
    }
    let ctx = Ctx::new(mesh, kernel);
    let rows = opts.exec.map(mesh.n(), |i| ctx.row_nonsymmetric(i));
    Ok(clamp(collect_rows(mesh.n(), rows)?))
}

/// `A[i][j] = ½ ∬ (φ_i(x)-φ_i(y))(φ_j(x)-φ_j(y)) a(x,y)`; symmetric kernels only.
pub fn assemble_stiffness_symmetric(mesh: &Mesh, kernel: &Kernel) -> Result<Stiffness> {
    assemble_stiffness_symmetric_with(mesh, kernel, &AssemblyOptions::default())
}

pub fn assemble_stiffness_symmetric_with(mesh: &Mesh, kernel: &Kernel, opts: &AssemblyOptions) -> Result<Stiffness> {
    if !kernel.is_symmetric() {
        return usage(format!("kernel {} is not symmetric; use the nonsymmetric assembly", kernel.name()));
    }
    if let (true, KernelKind::Fractional { scale }) = (opts.exact_fractional, kernel.kind()) {
        return Ok(clamp(exact_fractional(mesh, kernel.s(), kernel.c2() * scale)));
    }
    let ctx = Ctx::new(mesh, kernel);
    let rows = opts.exec.map(mesh.n(), |i| ctx.row_symmetric(i));
    Ok(clamp(collect_rows(mesh.n(), rows)?))
}

/// `(factor / 2) T(|i - j|)` with `T` the exact hat interaction.
fn exact_fractional(mesh: &Mesh, s: f64, factor: f64) -> DMatrix<f64> {
    let col = hat_interactions(mesh.n(), s, mesh.h());
    DMatrix::from_fn(mesh.n(), mesh.n(), |i, j| 0.5 * factor * col[i.abs_diff(j)])
}

fn collect_rows(n: usize, rows: Vec<Result<Vec<f64>>>) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row?.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

fn clamp(mut m: DMatrix<f64>) -> Stiffness {
    let scale = m.amax();
    let limit = CLAMP_TOL * scale;
    let mut report = ClampReport::default();
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)];
            if i != j && v > 0.0 {
                if v <= limit {
                    report.clamped += 1;
                    report.total += v;
                    report.max = report.max.max(v);
                    m[(i, j)] = 0.0;
                } else {
                    report.unclamped_positive = report.unclamped_positive.max(v);
                }
            }
        }
    }
    if report.unclamped_positive > 0.0 {
        // P1 stiffness of the fractional kernel loses the Z-pattern for s below about 0.237.
        log::warn!(
            "stiffness has positive off-diagonal {:.3e} ({:.1e} of max); discrete comparison principles may fail",
            report.unclamped_positive,
            report.unclamped_positive / scale
        );
    }
    Stiffness { matrix: m, clamp: report }
}

struct Ctx<'a> {
    mesh: &'a Mesh,
    kernel: &'a Kernel,
    s: f64,
    h: f64,
    rules: Rules,
    /// Distance beyond the boundary where the exterior profile is frozen.
    cutoff: f64,
}

impl<'a> Ctx<'a> {
    fn new(mesh: &'a Mesh, kernel: &'a Kernel) -> Self {
        Self {
            mesh,
            kernel,
            s: kernel.s(),
            h: mesh.h(),
            rules: Rules::new(kernel.s()),
            cutoff: CUTOFF_FACTOR * mesh.length(),
        }
    }

    #[inline]
    fn a(&self, x: f64, y: f64) -> f64 {
        self.kernel.evaluate(x, y)
    }

    fn row_nonsymmetric(&self, i: usize) -> Result<Vec<f64>> {
        let mesh = self.mesh;
        let mut row = vec![0.0; mesh.n()];
        for e in support(i) {
            for f in 0..mesh.num_elements() {
                let js = dofs_of(mesh, e, f);
                for &j in &js {
                    let v = match e.abs_diff(f) {
                        0 => self.identical_nonsym(i, j, e),
                        1 => self.adjacent_nonsym(i, j, e, f),
                        gap => self.separated(e, f, gap, |x, y| hat(mesh, i, x) * (hat(mesh, j, x) - hat(mesh, j, y)) * self.a(x, y)),
                    };
                    row[j] += finite_or_fail(v, || format!("non-finite entry ({i}, {j}) from element pair ({e}, {f})"))?;
                }
            }
            for j in mesh.element_dofs(e).dofs() {
                let v = self.exterior_nonsym(i, j, e)?;
                row[j] += finite_or_fail(v, || format!("non-finite exterior term ({i}, {j}) on element {e}"))?;
            }
        }
        Ok(row)
    }

    /// `∬_{e×e}` of the form symmetrized under `x ↔ y`, which removes the principal value.
    fn identical_nonsym(&self, i: usize, j: usize, e: usize) -> f64 {
        let mesh = self.mesh;
        let g = |x: f64, y: f64| {
            0.5 * (hat(mesh, j, x) - hat(mesh, j, y)) * (hat(mesh, i, x) * self.a(x, y) - hat(mesh, i, y) * self.a(y, x))
        };
        // g is symmetric, so integrate over x > y and double.
        2.0 * self.diagonal_strip(e, &self.rules.w1, 1.0 - 2.0 * self.s, |x, t| g(x, x - t))
    }

    /// `∫_0^h dt ∫_{a+t}^{a+h} F(x, t) dx` where `F ~ t^p` near `t = 0`; `rule` carries `t^p`.
    fn diagonal_strip<F: Fn(f64, f64) -> f64>(&self, e: usize, rule: &GaussRule, p: f64, f: F) -> f64 {
        let (a, b) = self.mesh.element(e);
        rule.integrate(0.0, self.h, |t| {
            let inner = self.rules.gl10.integrate(a + t, b, |x| f(x, t));
            inner * t.powf(-p)
        })
    }

    /// Duffy split at the shared node: `x = p ∓ σ`, `y = p ± τ`.
    fn duffy<F: Fn(f64, f64) -> f64>(&self, e: usize, f_el: usize, rule: &GaussRule, p_exp: f64, f: F) -> f64 {
        let (ea, eb) = self.mesh.element(e);
        let (node, dir) = if f_el > e { (eb, 1.0) } else { (ea, -1.0) };
        rule.integrate(0.0, self.h, |rho| {
            let inner = self.rules.gl10.integrate(0.0, 1.0, |w| {
                let (s1, t1) = (rho, rho * w);
                let (s2, t2) = (rho * w, rho);
                f(node - dir * s1, node + dir * t1) + f(node - dir * s2, node + dir * t2)
            });
            // Jacobian ρ; the rule carries ρ^{p_exp}.
            inner * rho * rho.powf(-p_exp)
        })
    }

    fn adjacent_nonsym(&self, i: usize, j: usize, e: usize, f_el: usize) -> f64 {
        let mesh = self.mesh;
        self.duffy(e, f_el, &self.rules.w1, 1.0 - 2.0 * self.s, |x, y| {
            hat(mesh, i, x) * (hat(mesh, j, x) - hat(mesh, j, y)) * self.a(x, y)
        })
    }

    fn separated<F: Fn(f64, f64) -> f64>(&self, e: usize, f_el: usize, gap: usize, g: F) -> f64 {
        let rule = self.rules.separated(gap);
        let (ea, eb) = self.mesh.element(e);
        let (fa, fb) = self.mesh.element(f_el);
        rule.integrate(ea, eb, |x| rule.integrate(fa, fb, |y| g(x, y)))
    }

    /// `∫_e φ_i φ_j κ_ext`, with the boundary singularity `d^{-2s}` carried by a Jacobi weight.
    fn exterior_nonsym(&self, i: usize, j: usize, e: usize) -> Result<f64> {
        let mesh = self.mesh;
        let mut err = None;
        let mut kext = |x: f64| match self.kappa_ext(x) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        };
        let (a, b) = mesh.element(e);
        let v = if e == 0 || e == mesh.n() {
            // φ_i φ_j = (d/h)^2 with d the distance to the boundary node.
            let p = 2.0 - 2.0 * self.s;
            if e == 0 {
                self.rules.w2.integrate(a, b, |x| hat(mesh, i, x) * hat(mesh, j, x) * kext(x) * (x - a).powf(-p))
            } else {
                self.rules.w2.integrate(0.0, b - a, |d| {
                    let x = b - d;
                    hat(mesh, i, x) * hat(mesh, j, x) * kext(x) * d.powf(-p)
                })
            }
        } else {
            self.rules.gl12.integrate(a, b, |x| hat(mesh, i, x) * hat(mesh, j, x) * kext(x))
        };
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }

    /// `∫_{Ω^c} a(x, y) dy` for `x ∈ Ω`.
    fn kappa_ext(&self, x: f64) -> Result<f64> {
        let (lo, hi) = (self.mesh.x_lo(), self.mesh.x_hi());
        let s = self.s;
        let c2 = self.kernel.c2();
        if let KernelKind::Fractional { scale } = self.kernel.kind() {
            return Ok(c2 * scale * ((x - lo).powf(-2.0 * s) + (hi - x).powf(-2.0 * s)) / (2.0 * s));
        }
        let mut total = 0.0;
        for (d, dir, edge) in [(x - lo, -1.0, lo), (hi - x, 1.0, hi)] {
            // r = x - y (or y - x) = d e^ρ over [d, d + T], then the frozen tail.
            let frozen = edge + dir * self.cutoff;
            let rho_max = ((d + self.cutoff) / d).ln();
            let f = |rho: f64| {
                let r = d * rho.exp();
                self.kernel.profile(x, x + dir * r) * r.powf(-2.0 * s)
            };
            let breaks: Vec<f64> = (1..rho_max.ceil() as usize).map(|k| k as f64).collect();
            let est = adaptive(f, 0.0, rho_max, &breaks, QuadTol { abs: 1e-13, rel: 1e-10, max_intervals: 2000 });
            if !est.converged || !est.value.is_finite() {
                return Err(Error::NumericalFailure(format!("exterior kernel integral at x = {x} did not converge")));
            }
            let tail = self.kernel.profile(x, frozen) * (d + self.cutoff).powf(-2.0 * s) / (2.0 * s);
            total += est.value + tail;
        }
        Ok(c2 * total)
    }

    fn row_symmetric(&self, i: usize) -> Result<Vec<f64>> {
        let mesh = self.mesh;
        let ne = mesh.num_elements();
        let sup = support(i);
        let mut row = vec![0.0; mesh.n()];
        let dd = |j: usize, x: f64, y: f64| {
            0.5 * (hat(mesh, i, x) - hat(mesh, i, y)) * (hat(mesh, j, x) - hat(mesh, j, y)) * self.a(x, y)
        };
        for e in 0..ne {
            for f in 0..ne {
                if !(sup.contains(&e) || sup.contains(&f)) {
                    continue;
                }
                for j in dofs_of(mesh, e, f) {
                    let v = match e.abs_diff(f) {
                        0 => self.diagonal_strip(e, &self.rules.w1, 1.0 - 2.0 * self.s, |x, t| dd(j, x, x - t) + dd(j, x - t, x)),
                        1 => self.duffy(e, f, &self.rules.w2, 2.0 - 2.0 * self.s, |x, y| dd(j, x, y)),
                        gap => self.separated(e, f, gap, |x, y| dd(j, x, y)),
                    };
                    row[j] += finite_or_fail(v, || format!("non-finite entry ({i}, {j}) from element pair ({e}, {f})"))?;
                }
            }
        }
        for e in sup {
            for j in mesh.element_dofs(e).dofs() {
                let v = self.exterior_ghosts(i, j, e);
                row[j] += finite_or_fail(v, || format!("non-finite exterior term ({i}, {j}) on element {e}"))?;
            }
        }
        Ok(row)
    }

    /// `∬_{e × Ω^c} φ_i φ_j(x) ½(a(x,y) + a(y,x))` over ghost elements of doubling size out to the
    /// cutoff, plus the frozen-profile tail.
    fn exterior_ghosts(&self, i: usize, j: usize, e: usize) -> f64 {
        let mesh = self.mesh;
        let h = self.h;
        let s = self.s;
        let (ea, eb) = mesh.element(e);
        let sym_a = |x: f64, y: f64| 0.5 * (self.a(x, y) + self.a(y, x));
        let phi2 = |x: f64| hat(mesh, i, x) * hat(mesh, j, x);
        let mut total = 0.0;
        for (edge, dir, touching) in [(mesh.x_lo(), -1.0, 0), (mesh.x_hi(), 1.0, mesh.n())] {
            // Ghost element boundaries at offsets h, 3h, 7h, ... double as breakpoints.
            let mut offsets = vec![0.0];
            let mut size = h;
            while *offsets.last().expect("nonempty") < self.cutoff {
                let next = (offsets.last().expect("nonempty") + size).min(self.cutoff);
                offsets.push(next);
                size *= 2.0;
            }
            let start = if e == touching {
                // Corner at (edge, edge): x = edge - dir σ, y = edge + dir τ, weight ρ^{2-2s}.
                let p = 2.0 - 2.0 * s;
                total += self.rules.w2.integrate(0.0, h, |rho| {
                    let inner = self.rules.gl10.integrate(0.0, 1.0, |w| {
                        let f = |sg: f64, tu: f64| {
                            let x = edge - dir * sg;
                            let y = edge + dir * tu;
                            phi2(x) * sym_a(x, y)
                        };
                        f(rho, rho * w) + f(rho * w, rho)
                    });
                    inner * rho * rho.powf(-p)
                });
                h
            } else {
                0.0
            };
            let tol = QuadTol { abs: 1e-14, rel: 1e-11, max_intervals: 2000 };
            total += self.rules.gl8.integrate(ea, eb, |x| {
                let est = adaptive(|off| sym_a(x, edge + dir * off), start, self.cutoff, &offsets, tol);
                phi2(x) * if est.converged { est.value } else { f64::NAN }
            });
            let frozen = edge + dir * self.cutoff;
            let c2 = self.kernel.c2();
            total += self.rules.gl8.integrate(ea, eb, |x| {
                let b = 0.5 * (self.kernel.profile(x, frozen) + self.kernel.profile(frozen, x));
                phi2(x) * c2 * b * (x - frozen).abs().powf(-2.0 * s) / (2.0 * s)
            });
        }
        total
    }
}

/// Classical P1 stiffness of `-u''`: tridiagonal `(2, -1) / h`.
pub fn classical_stiffness(mesh: &Mesh) -> DMatrix<f64> {
    let n = mesh.n();
    let h = mesh.h();
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0 / h,
        1 => -1.0 / h,
        _ => 0.0,
    })
}

/// Scalar data given as a function of `x` or by interior nodal values.
#[derive(Clone)]
pub enum ScalarField {
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    Nodal(Vec<f64>),
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Function(_) => f.write_str("Function(..)"),
            Self::Nodal(v) => f.debug_tuple("Nodal").field(v).finish(),
        }
    }
}

impl ScalarField {
    pub fn function<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Self::Function(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::function(move |_| c)
    }

    /// Values at the interior nodes.
    pub fn nodal(&self, mesh: &Mesh) -> Result<Vec<f64>> {
        match self {
            Self::Function(f) => Ok(mesh.interpolate(|x| f(x))),
            Self::Nodal(v) => {
                mesh.check_len("nodal field", v.len())?;
                Ok(v.clone())
            }
        }
    }
}

/// Right-hand side `⟨F, v⟩ = ∫_Ω f_# v + ∫_ℝ f_vec D^s v`.
#[derive(Debug, Clone)]
pub struct LoadData {
    pub f_sharp: ScalarField,
    /// Assumed zero outside `[x_lo - W, x_hi + W]`, `W = 2 (x_hi - x_lo)`.
    pub f_vec: Option<ScalarField>,
}

impl LoadData {
    pub fn sharp(f: ScalarField) -> Self {
        Self { f_sharp: f, f_vec: None }
    }

    pub fn zero() -> Self {
        Self::sharp(ScalarField::constant(0.0))
    }
}

const THREE_POINT: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Load vector. Callable `f_#` is integrated against the hats with 3-point Gauss per element;
/// nodal `f_#` is lumped (`b_i = h f_i`). The `f_vec` term integrates `f_vec D^s φ_i`
/// adaptively over its window with the exact hat gradient.
pub fn assemble_load(mesh: &Mesh, data: &LoadData, s: f64) -> Result<Vec<f64>> {
    check_order(s)?;
    let n = mesh.n();
    let h = mesh.h();
    let mut b = match &data.f_sharp {
        ScalarField::Nodal(v) => {
            mesh.check_len("nodal f_sharp", v.len())?;
            v.iter().map(|f| h * f).collect::<Vec<f64>>()
        }
        ScalarField::Function(f) => {
            let mut b = vec![0.0; n];
            for e in 0..mesh.num_elements() {
                let (a, _) = mesh.element(e);
                for (t, w) in THREE_POINT {
                    let x = a + t * h;
                    let fx = f(x);
                    for (dof, phi, _) in mesh.element_dofs(e).eval(x) {
                        b[dof] += h * w * fx * phi;
                    }
                }
            }
            b
        }
    };
    if let Some(fv) = &data.f_vec {
        let c = riesz_constant(1, s)?;
        let width = 2.0 * mesh.length();
        let (lo, hi) = (mesh.x_lo() - width, mesh.x_hi() + width);
        let vec_term = |i: usize| -> Result<f64> {
            let p = mesh.dof_x(i);
            let breaks = [p - h, p, p + h];
            let est = match fv {
                ScalarField::Function(f) => adaptive(
                    |x| f(x) * hat_gradient_raw(mesh, i, x, s),
                    lo,
                    hi,
                    &breaks,
                    QuadTol { abs: 1e-12, rel: 1e-10, max_intervals: 4000 },
                ),
                ScalarField::Nodal(_) => return usage("f_vec must be given as a function on the real line"),
            };
            if !est.converged {
                return Err(Error::NumericalFailure(format!("f_vec load quadrature for dof {i} did not converge")));
            }
            Ok(c * est.value)
        };
        for (i, bi) in b.iter_mut().enumerate() {
            *bi += vec_term(i)?;
        }
    }
    if b.iter().any(|v| !v.is_finite()) {
        return domain("load data produced non-finite values");
    }
    Ok(b)
}

/// Discrete obstacle-problem operator: `A_h`, lumped mass `M_h = h I`, load `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSystem {
    pub mesh: Mesh,
    pub stiffness: DMatrix<f64>,
    pub mass_lumped: Vec<f64>,
    pub load: Vec<f64>,
    pub lambda: f64,
    /// Kernel band `(a_*, a^*)` the matrix came from.
    pub band: (f64, f64),
    pub clamp: ClampReport,
    /// Fractional order of the kernel, when known.
    pub order: Option<f64>,
}

impl DiscreteSystem {
    pub fn new(mesh: Mesh, stiffness: DMatrix<f64>, load: Vec<f64>, band: (f64, f64)) -> Result<Self> {
        if stiffness.nrows() != mesh.n() || stiffness.ncols() != mesh.n() {
            return usage(format!("stiffness is {}x{}, mesh has {} dofs", stiffness.nrows(), stiffness.ncols(), mesh.n()));
        }
        mesh.check_len("load", load.len())?;
        Ok(Self {
            mass_lumped: vec![mesh.h(); mesh.n()],
            mesh,
            stiffness,
            load,
            lambda: 0.0,
            band,
            clamp: ClampReport::default(),
            order: None,
        })
    }

    /// Assembles stiffness (nonsymmetric path) and load.
    pub fn assemble(mesh: Mesh, kernel: &Kernel, data: &LoadData) -> Result<Self> {
        Self::assemble_with(mesh, kernel, data, &AssemblyOptions::default())
    }

    pub fn assemble_with(mesh: Mesh, kernel: &Kernel, data: &LoadData, opts: &AssemblyOptions) -> Result<Self> {
        let st = assemble_stiffness_with(&mesh, kernel, opts)?;
        let load = assemble_load(&mesh, data, kernel.s())?;
        let mut sys = Self::new(mesh, st.matrix, load, (kernel.a_lower(), kernel.a_upper()))?;
        sys.clamp = st.clamp;
        Ok(sys.with_order(kernel.s()))
    }

    pub fn with_order(mut self, s: f64) -> Self {
        self.order = Some(s);
        self
    }

    pub fn n(&self) -> usize {
        self.mesh.n()
    }

    pub fn with_load(&self, load: Vec<f64>) -> Result<Self> {
        self.mesh.check_len("load", load.len())?;
        Ok(Self { load, ..self.clone() })
    }

    /// `A u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|i| (0..n).map(|j| self.stiffness[(i, j)] * u[j]).sum()).collect()
    }

    /// `A u - b`.
    pub fn residual(&self, u: &[f64]) -> Vec<f64> {
        self.apply(u).iter().zip(&self.load).map(|(a, b)| a - b).collect()
    }

    /// `uᵀ A v`.
    pub fn form(&self, u: &[f64], v: &[f64]) -> f64 {
        self.apply(v).iter().zip(u).map(|(a, b)| a * b).sum()
    }

    /// Solves `A u = b` directly.
    pub fn linear_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let rhs = nalgebra::DVector::from_column_slice(b);
        self.stiffness
            .clone()
            .lu()
            .solve(&rhs)
            .map(|v| v.iter().copied().collect())
            .ok_or_else(|| Error::NumericalFailure("stiffness matrix is singular".into()))
    }

    /// Writes the matrix, mass and load as CSV (`kind,i,j,value`).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kind,i,j,value")?;
        for i in 0..self.n() {
            for j in 0..self.n() {
                writeln!(w, "A,{i},{j},{:e}", self.stiffness[(i, j)])?;
            }
        }
        for (i, m) in self.mass_lumped.iter().enumerate() {
            writeln!(w, "M,{i},{i},{m:e}")?;
        }
        for (i, b) in self.load.iter().enumerate() {
            writeln!(w, "b,{i},0,{b:e}")?;
        }
        Ok(())
    }
}

/// `A_h + λ diag(M_h)`.
pub fn add_mass(system: &DiscreteSystem, lambda: f64) -> Result<DiscreteSystem> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return domain(format!("lambda must be nonnegative, got {lambda}"));
    }
    let mut out = system.clone();
    for (i, m) in system.mass_lumped.iter().enumerate() {
        out.stiffness[(i, i)] += lambda * m;
    }
    out.lambda += lambda;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{fractional_laplacian_kernel, scaled_fractional_kernel, sin_cos_kernel, sin_diff_kernel};

    fn quad_only() -> AssemblyOptions {
        AssemblyOptions { exec: Exec::Sequential, exact_fractional: false }
    }

    #[test]
    fn quadrature_matches_exact_toeplitz() {
        for s in [0.25, 0.5, 0.8] {
            let mesh = Mesh::new(-1.0, 1.0, 7).unwrap();
            let k = fractional_laplacian_kernel(s).unwrap();
            let exact = assemble_stiffness(&mesh, &k).unwrap().matrix;
            let a = assemble_stiffness_with(&mesh, &k, &quad_only()).unwrap().matrix;
            let b = assemble_stiffness_symmetric_with(&mesh, &k, &quad_only()).unwrap().matrix;
            let scale = exact.amax();
            assert!((&a - &exact).amax() < 1e-7 * scale, "s={s} A {}", (&a - &exact).amax() / scale);
            assert!((&b - &exact).amax() < 1e-7 * scale, "s={s} B {}", (&b - &exact).amax() / scale);
        }
    }

    #[test]
    fn general_symmetric_kernel_paths_agree() {
        let mesh = Mesh::new(-1.0, 1.0, 6).unwrap();
        let k = sin_diff_kernel(0.6).unwrap();
        let a = assemble_stiffness_with(&mesh, &k, &quad_only()).unwrap().matrix;
        let b = assemble_stiffness_symmetric_with(&mesh, &k, &quad_only()).unwrap().matrix;
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= 1e-5 * x.abs().max(1e-12), "{x} {y}");
        }
    }

    #[test]
    fn symmetric_path_rejects_nonsymmetric_kernel() {
        let mesh = Mesh::new(0.0, 1.0, 3).unwrap();
        let k = sin_cos_kernel(0.5).unwrap();
        assert!(matches!(assemble_stiffness_symmetric(&mesh, &k), Err(Error::Usage(_))));
    }

    #[test]
    fn scaling_kernel_scales_matrix() {
        let mesh = Mesh::new(0.0, 1.0, 5).unwrap();
        let a = assemble_stiffness(&mesh, &fractional_laplacian_kernel(0.4).unwrap()).unwrap().matrix;
        let b = assemble_stiffness(&mesh, &scaled_fractional_kernel(0.4, 2.0).unwrap()).unwrap().matrix;
        assert!((b - 2.0 * &a).amax() <= 1e-10 * a.amax());
    }

    #[test]
    fn unit_load_gives_h() {
        let mesh = Mesh::new(-1.0, 1.0, 9).unwrap();
        let b = assemble_load(&mesh, &LoadData::sharp(ScalarField::constant(1.0)), 0.5).unwrap();
        assert!(b.iter().all(|v| (v - 0.2).abs() < 1e-14));
    }

    #[test]
    fn add_mass_shifts_diagonal() {
        let mesh = Mesh::new(0.0, 1.0, 9).unwrap();
        let k = fractional_laplacian_kernel(0.5).unwrap();
        let sys = DiscreteSystem::assemble(mesh, &k, &LoadData::zero()).unwrap();
        assert_eq!(add_mass(&sys, 0.0).unwrap().stiffness, sys.stiffness);
        let shifted = add_mass(&sys, 1.0).unwrap();
        for i in 0..9 {
            assert!((shifted.stiffness[(i, i)] - sys.stiffness[(i, i)] - 0.1).abs() < 1e-14);
        }
        assert!(add_mass(&sys, -1.0).is_err());
    }
}
