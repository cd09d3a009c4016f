//! Two-point kernels `a(x, y) = c_{1,s}^2 b(x, y) |x - y|^{-1-2s}` with ellipticity metadata, and
//! the principal-value integrator for the kernel `k_A` induced by a scalar coefficient field.

use std::fmt;
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, usage, Error, Result};
use crate::exec::Exec;
use crate::fractional::{check_order, ds_energy_factor, riesz_constant};
use crate::quad::{adaptive, geometric_breaks, GaussRule, QuadTol};

/// Shared two-point function.
pub type TwoPoint = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Number of random pairs used by the sampled band and symmetry checks.
pub const BAND_SAMPLES: usize = 10_000;
const SAMPLE_WINDOW: (f64, f64) = (-10.0, 10.0);

/// Structural information the assembly uses to pick exact formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// `b ≡ scale`: translation invariant, exact Toeplitz assembly applies.
    Fractional { scale: f64 },
    General,
}

/// Kernel of the bilinear form `E_a`, stored through its bounded profile
/// `b(x, y) = a(x, y) |x - y|^{1+2s} / c_{1,s}^2`.
#[derive(Clone)]
pub struct Kernel {
    name: String,
    s: f64,
    c2: f64,
    profile: TwoPoint,
    a_lower: f64,
    a_upper: f64,
    symmetric: bool,
    kind: KernelKind,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name)
            .field("s", &self.s)
            .field("a_lower", &self.a_lower)
            .field("a_upper", &self.a_upper)
            .field("symmetric", &self.symmetric)
            .field("kind", &self.kind)
            .finish()
    }
}

impl Kernel {
    fn fractional(name: &str, s: f64, scale: f64) -> Result<Self> {
        check_order(s)?;
        if !(scale.is_finite() && scale > 0.0) {
            return domain(format!("kernel scale must be positive, got {scale}"));
        }
        let c = riesz_constant(1, s)?;
        Ok(Self {
            name: name.to_string(),
            s,
            c2: c * c,
            profile: Arc::new(move |_, _| scale),
            a_lower: scale,
            a_upper: scale,
            symmetric: true,
            kind: KernelKind::Fractional { scale },
        })
    }

    /// General kernel given directly as `a(x, y)`, with declared band and symmetry. The
    /// declaration is checked on sampled pairs.
    pub fn from_fn<F>(name: &str, s: f64, a: F, a_lower: f64, a_upper: f64, symmetric: bool) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        check_order(s)?;
        let c = riesz_constant(1, s)?;
        let c2 = c * c;
        let profile: TwoPoint = Arc::new(move |x, y| a(x, y) * (x - y).abs().powf(1.0 + 2.0 * s) / c2);
        let k = Self { name: name.to_string(), s, c2, profile, a_lower, a_upper, symmetric, kind: KernelKind::General };
        k.validate_declared()?;
        Ok(k)
    }

    fn validate_declared(&self) -> Result<()> {
        if !(self.a_lower > 0.0 && self.a_upper >= self.a_lower && self.a_upper.is_finite()) {
            return domain(format!("kernel band must satisfy 0 < a_* <= a^*, got [{}, {}]", self.a_lower, self.a_upper));
        }
        let report = band_check(self, BAND_SAMPLES, SAMPLE_WINDOW, 0);
        if report.min_ratio <= 0.0 || !report.min_ratio.is_finite() {
            return domain(format!("kernel {} has a nonpositive sample", self.name));
        }
        if !report.pass {
            return domain(format!(
                "kernel {} leaves its declared band or symmetry: ratio in [{}, {}], asymmetry {}",
                self.name, report.min_ratio, report.max_ratio, report.max_asymmetry
            ));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// `c_{1,s}^2`.
    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn a_lower(&self) -> f64 {
        self.a_lower
    }

    pub fn a_upper(&self) -> f64 {
        self.a_upper
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// `a(x, y)` for `x != y`.
    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        self.c2 * (self.profile)(x, y) * (x - y).abs().powf(-1.0 - 2.0 * self.s)
    }

    /// Bounded factor `b(x, y)` in `[a_*, a^*]`.
    pub fn profile(&self, x: f64, y: f64) -> f64 {
        (self.profile)(x, y)
    }

    /// `factor * a`, with the band scaled accordingly.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return domain(format!("kernel factor must be positive, got {factor}"));
        }
        let inner = self.profile.clone();
        Ok(Self {
            name: format!("{}*{factor}", self.name),
            profile: Arc::new(move |x, y| factor * inner(x, y)),
            a_lower: factor * self.a_lower,
            a_upper: factor * self.a_upper,
            kind: match self.kind {
                KernelKind::Fractional { scale } => KernelKind::Fractional { scale: scale * factor },
                KernelKind::General => KernelKind::General,
            },
            ..self.clone()
        })
    }

    /// Replaces the sampled band by a declared one, which must contain the samples.
    pub fn with_band(mut self, a_lower: f64, a_upper: f64) -> Result<Self> {
        self.a_lower = a_lower;
        self.a_upper = a_upper;
        self.validate_declared()?;
        Ok(self)
    }
}

/// `c_{1,s}^2 |x - y|^{-1-2s}`, band `a_* = a^* = 1`.
pub fn fractional_laplacian_kernel(s: f64) -> Result<Kernel> {
    Kernel::fractional("fractional", s, 1.0)
}

/// `factor · c_{1,s}^2 |x - y|^{-1-2s}`.
pub fn scaled_fractional_kernel(s: f64, factor: f64) -> Result<Kernel> {
    Kernel::fractional(&format!("scaled({factor})"), s, factor)
}

/// `C_{1,s} |x - y|^{-1-2s}`: the kernel whose form equals `∫ D^s u D^s v`. Its band is
/// `a_* = a^* = C_{1,s} / c_{1,s}^2`.
pub fn ds_energy_kernel(s: f64) -> Result<Kernel> {
    Kernel::fractional("ds_energy", s, ds_energy_factor(s)?)
}

/// `c^2 b(x, y) |x - y|^{-1-2s}` with `a_* = min b`, `a^* = max b` over sampled pairs.
pub fn perturbed_kernel<F>(name: &str, s: f64, b: F, symmetric: bool) -> Result<Kernel>
where
    F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
{
    check_order(s)?;
    let c = riesz_constant(1, s)?;
    let profile: TwoPoint = Arc::new(b);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in sample_pairs(BAND_SAMPLES, SAMPLE_WINDOW, 0) {
        let v = profile(x, y);
        if !(v.is_finite() && v > 0.0) {
            return domain(format!("perturbation {name} is not positive at ({x}, {y}): {v}"));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let k = Kernel {
        name: name.to_string(),
        s,
        c2: c * c,
        profile,
        a_lower: lo,
        a_upper: hi,
        symmetric,
        kind: KernelKind::General,
    };
    k.validate_declared()?;
    Ok(k)
}

/// `b = 1.5 + 0.4 sin x cos y`, nonsymmetric, band `[1.1, 1.9]`.
pub fn sin_cos_kernel(s: f64) -> Result<Kernel> {
    perturbed_kernel("sin_cos", s, |x: f64, y: f64| 1.5 + 0.4 * x.sin() * y.cos(), false)?.with_band(1.1, 1.9)
}

/// `b = 2 - |sin(x - y)|`, symmetric, band `[1, 2]`.
pub fn sin_diff_kernel(s: f64) -> Result<Kernel> {
    perturbed_kernel("sin_diff", s, |x: f64, y: f64| 2.0 - (x - y).sin().abs(), true)?.with_band(1.0, 2.0)
}

/// Names accepted by [`builtin_kernel`].
pub const BUILTIN_KERNELS: [&str; 5] = ["fractional", "scaled", "sin_cos", "sin_diff", "ds_energy"];

/// Looks up a built-in kernel; `factor` is used by `scaled` only.
pub fn builtin_kernel(name: &str, s: f64, factor: Option<f64>) -> Result<Kernel> {
    match name {
        "fractional" => fractional_laplacian_kernel(s),
        "scaled" => scaled_fractional_kernel(s, factor.unwrap_or(1.0)),
        "sin_cos" => sin_cos_kernel(s),
        "sin_diff" => sin_diff_kernel(s),
        "ds_energy" => ds_energy_kernel(s),
        other => usage(format!("unknown kernel {other:?}; available: {}", BUILTIN_KERNELS.join(", "))),
    }
}

fn sample_pairs(count: usize, window: (f64, f64), seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = rng.random_range(window.0..window.1);
        let y = rng.random_range(window.0..window.1);
        if x != y {
            out.push((x, y));
        }
    }
    out
}

/// Outcome of the sampled band check `a_* ≤ a(x,y)|x-y|^{1+2s}/c^2 ≤ a^*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Largest `|a(x,y) - a(y,x)| / a(x,y)` seen.
    pub max_asymmetry: f64,
    pub pass: bool,
}

pub fn band_check(kernel: &Kernel, pairs: usize, window: (f64, f64), seed: u64) -> BandReport {
    let (mut lo, mut hi, mut asym) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for (x, y) in sample_pairs(pairs, window, seed) {
        let a = kernel.evaluate(x, y);
        let ratio = a * (x - y).abs().powf(1.0 + 2.0 * kernel.s) / kernel.c2;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        asym = asym.max((a - kernel.evaluate(y, x)).abs() / a);
    }
    let slack = 1e-12;
    let in_band = lo >= kernel.a_lower * (1.0 - slack) && hi <= kernel.a_upper * (1.0 + slack);
    let sym_ok = !kernel.symmetric || asym <= 1e-12;
    BandReport { min_ratio: lo, max_ratio: hi, max_asymmetry: asym, pass: in_band && sym_ok }
}

/// Scalar coefficient field `A(z)` (the d = 1 case of a matrix field).
#[derive(Clone)]
pub struct CoefficientField {
    alpha: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    description: String,
    /// Points where the field changes character; used as quadrature breakpoints.
    breaks: Vec<f64>,
    /// `sup |A|`, used by the tail bound.
    bound: f64,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("description", &self.description)
            .field("breaks", &self.breaks)
            .field("bound", &self.bound)
            .finish()
    }
}

const FIELD_LIMIT: f64 = 1e6;

impl CoefficientField {
    /// Wraps `alpha`; `|alpha|` is sampled on `[-100, 100]` and must stay below `10^6`.
    pub fn new<F>(description: &str, alpha: F, breaks: Vec<f64>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let mut bound = 0.0f64;
        let samples = 200_000;
        for k in 0..=samples {
            let z = -100.0 + 200.0 * k as f64 / samples as f64;
            bound = bound.max(alpha(z).abs());
        }
        for &z in &breaks {
            bound = bound.max(alpha(z).abs());
        }
        if !bound.is_finite() || bound > FIELD_LIMIT {
            return domain(format!("coefficient field {description} is not bounded by {FIELD_LIMIT}"));
        }
        Ok(Self { alpha: Arc::new(alpha), description: description.to_string(), breaks, bound })
    }

    pub fn constant(alpha: f64) -> Result<Self> {
        Self::new(&format!("constant {alpha}"), move |_| alpha, Vec::new())
    }

    /// `0.01 + 50 H(z)` with `H` a smooth plateau equal to 1 on `[1, 1.5]` and 0 off `(0.9, 1.6)`.
    pub fn counterexample() -> Self {
        Self::new("0.01 + 50 H, H = 1 on [1, 1.5]", |z| 0.01 + 50.0 * smooth_plateau(z), vec![0.9, 1.0, 1.5, 1.6])
            .expect("bounded by construction")
    }

    pub fn eval(&self, z: f64) -> f64 {
        (self.alpha)(z)
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }
}

/// `C^∞` transition from 0 (for `t ≤ 0`) to 1 (for `t ≥ 1`).
pub fn smooth_step(t: f64) -> f64 {
    let g = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        g(t) / (g(t) + g(1.0 - t))
    }
}

/// Plateau of the counterexample field: rises on `[0.9, 1]`, equals 1 on `[1, 1.5]`, falls on
/// `[1.5, 1.6]`.
pub fn smooth_plateau(z: f64) -> f64 {
    if z <= 1.0 {
        smooth_step((z - 0.9) / 0.1)
    } else if z <= 1.5 {
        1.0
    } else {
        smooth_step((1.6 - z) / 0.1)
    }
}

/// `((y - z)/|y - z|^{2+s}) ((z - x)/|z - x|^{2+s})`.
pub fn kappa_integrand(x: f64, y: f64, z: f64, s: f64) -> Result<f64> {
    check_order(s)?;
    if z == x || z == y {
        return domain(format!("kappa integrand is singular at z = {z}"));
    }
    Ok(kappa(x, y, z, s))
}

#[inline]
fn kappa(x: f64, y: f64, z: f64, s: f64) -> f64 {
    let p = -1.0 - s;
    let a = y - z;
    let b = z - x;
    a.signum() * a.abs().powf(p) * b.signum() * b.abs().powf(p)
}

/// Value of `k_A(x, y)` with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KAEvaluation {
    pub x: f64,
    pub y: f64,
    /// `c_{1,s}^2 · P.V. ∫ A κ`.
    pub value: f64,
    /// The principal value itself, before the `c^2` factor.
    pub integral: f64,
    pub est_abs_error: f64,
}

/// Tuning of the principal-value integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KAOptions {
    /// Pairing radius cap; the radius used is `min(radius, |x - y| / 4)`.
    pub radius: f64,
    pub z_max: f64,
    pub tol: QuadTol,
    /// Gauss–Jacobi degree of the paired singular integrals.
    pub pair_degree: usize,
}

impl Default for KAOptions {
    fn default() -> Self {
        Self { radius: 1e-3, z_max: 1e3, tol: QuadTol { abs: 1e-11, rel: 1e-11, max_intervals: 2000 }, pair_degree: 12 }
    }
}

/// `k_A(x, y)` with default options.
pub fn ka_evaluate(field: &CoefficientField, x: f64, y: f64, s: f64) -> Result<KAEvaluation> {
    ka_evaluate_with(field, x, y, s, &KAOptions::default())
}

pub fn ka_evaluate_with(field: &CoefficientField, x: f64, y: f64, s: f64, opts: &KAOptions) -> Result<KAEvaluation> {
    check_order(s)?;
    if !(x.is_finite() && y.is_finite()) || x == y {
        return domain(format!("k_A needs distinct finite points, got ({x}, {y})"));
    }
    let reach = x.abs().max(y.abs());
    if opts.z_max <= 2.0 * reach + 1.0 {
        return usage(format!("z_max {} too small for the pair ({x}, {y})", opts.z_max));
    }
    let r = opts.radius.min(0.25 * (x - y).abs());
    let coarse = pv_integral(field, x, y, s, r, opts)?;
    let fine = pv_integral(field, x, y, s, 0.5 * r, opts)?;
    let discrepancy = (coarse.0 - fine.0).abs();
    let allowed = 1e-6 * fine.0.abs().max(1.0) + 10.0 * (coarse.1 + fine.1);
    if discrepancy > allowed {
        return Err(Error::NumericalFailure(format!(
            "principal value at ({x}, {y}) moves by {discrepancy:e} when the pairing radius halves"
        )));
    }
    // |κ| ≤ (|z| - M)^{-2-2s} beyond z_max on both sides.
    let tail = field.bound * 2.0 * (opts.z_max - reach).powf(-1.0 - 2.0 * s) / (1.0 + 2.0 * s);
    // Far away κ ≈ -|z|^{-2-2s}; add that leading term with A frozen at ±z_max.
    let z = opts.z_max;
    let far = -(field.eval(z) + field.eval(-z)) * z.powf(-1.0 - 2.0 * s) / (1.0 + 2.0 * s);
    let integral = fine.0 + far;
    let c = riesz_constant(1, s)?;
    let c2 = c * c;
    Ok(KAEvaluation {
        x,
        y,
        value: c2 * integral,
        integral,
        est_abs_error: c2 * (fine.1 + discrepancy + tail),
    })
}

/// PV integral over `[-z_max, z_max]` with symmetric pairing of radius `r` around both
/// singularities; returns `(value, quadrature error estimate)`.
fn pv_integral(field: &CoefficientField, x: f64, y: f64, s: f64, r: f64, opts: &KAOptions) -> Result<(f64, f64)> {
    let f = |z: f64| field.eval(z) * kappa(x, y, z, s);
    let rule = GaussRule::jacobi(opts.pair_degree, -s);
    // Near p the integrand is sign(z - p)|z - p|^{-1-s} F(z) with F smooth, so pairing z = p ± t
    // leaves t^{-s} (F(p + t) - F(p - t)) / t.
    let paired = |p: f64, other: f64, orient: f64| {
        let smooth = |z: f64| {
            let a = other - z;
            field.eval(z) * a.signum() * a.abs().powf(-1.0 - s)
        };
        orient * rule.integrate(0.0, r, |t| (smooth(p + t) - smooth(p - t)) / t)
    };
    // κ = (y - z)/|y - z|^{2+s} · (z - x)/|z - x|^{2+s}: around x the singular factor is in z - x;
    // around y it is in y - z, i.e. an orientation flip.
    let near = paired(x, y, 1.0) + paired(y, x, 1.0);

    let (lo, hi) = if x < y { (x, y) } else { (y, x) };
    let z_max = opts.z_max;
    let mut breaks = geometric_breaks(lo, r, -z_max, z_max);
    breaks.extend(geometric_breaks(hi, r, -z_max, z_max));
    breaks.extend(field.breaks.iter().copied());
    breaks.push(0.5 * (lo + hi));
    let segments = [(-z_max, lo - r), (lo + r, hi - r), (hi + r, z_max)];
    let mut value = near;
    let mut err = 0.0;
    for (a, b) in segments {
        let est = adaptive(f, a, b, &breaks, opts.tol);
        if !est.value.is_finite() {
            return Err(Error::NumericalFailure(format!("non-finite k_A quadrature on [{a}, {b}]")));
        }
        value += est.value;
        err += est.abs_err;
    }
    Ok((value, err))
}

/// One row of a positivity scan.
#[derive(Debug, Clone, PartialEq)]
pub struct BandScanEntry {
    pub x: f64,
    pub y: f64,
    pub evaluation: Result<KAEvaluation>,
    /// `value · |x - y|^{1+2s}` when the evaluation succeeded.
    pub normalized: Option<f64>,
    pub negative: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandScanReport {
    pub entries: Vec<BandScanEntry>,
    pub min_normalized: Option<f64>,
    pub max_normalized: Option<f64>,
    pub violations: usize,
}

/// Evaluates `k_A` on every pair; failures are recorded per pair.
pub fn ka_band_scan(field: &CoefficientField, s: f64, pairs: &[(f64, f64)], exec: Exec) -> BandScanReport {
    let entries: Vec<BandScanEntry> = exec.map(pairs.len(), |i| {
        let (x, y) = pairs[i];
        let evaluation = ka_evaluate(field, x, y, s);
        let normalized = evaluation.as_ref().ok().map(|e| e.value * (x - y).abs().powf(1.0 + 2.0 * s));
        let negative = normalized.is_some_and(|v| v <= 0.0);
        BandScanEntry { x, y, evaluation, normalized, negative }
    });
    let values: Vec<f64> = entries.iter().filter_map(|e| e.normalized).collect();
    BandScanReport {
        min_normalized: values.iter().copied().reduce(f64::min),
        max_normalized: values.iter().copied().reduce(f64::max),
        violations: entries.iter().filter(|e| e.negative || e.evaluation.is_err()).count(),
        entries,
    }
}

/// Kernel `k_A` as a general kernel for assembly. Each evaluation runs the PV integrator, so this
/// is only practical on coarse meshes.
pub fn ka_kernel(field: CoefficientField, s: f64, a_lower: f64, a_upper: f64) -> Result<Kernel> {
    check_order(s)?;
    let c = riesz_constant(1, s)?;
    let c2 = c * c;
    let profile: TwoPoint = Arc::new(move |x, y| {
        ka_evaluate(&field, x, y, s).map(|e| e.integral).unwrap_or(f64::NAN) * (x - y).abs().powf(1.0 + 2.0 * s)
    });
    Ok(Kernel {
        name: "k_A".to_string(),
        s,
        c2,
        profile,
        a_lower,
        a_upper,
        symmetric: true,
        kind: KernelKind::General,
    })
}
