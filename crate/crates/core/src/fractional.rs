//! Constants of the Riesz fractional gradient, penalty profiles, and exact evaluation of the
//! singular double integrals for continuous piecewise-linear functions on a uniform mesh.

use std::f64::consts::PI;

use crate::error::{domain, usage, Result};
use crate::mesh::Mesh;
use crate::quad::GaussRule;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function (Lanczos, g = 7, nine terms) with reflection below 1/2.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let t = x + LANCZOS_G + 0.5;
        let series = LANCZOS[1..]
            .iter()
            .enumerate()
            .fold(LANCZOS[0], |acc, (i, c)| acc + c / (x + (i + 1) as f64));
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * series
    }
}

pub(crate) fn check_order(s: f64) -> Result<()> {
    if s.is_finite() && s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        domain(format!("s must lie in (0,1), got {s}"))
    }
}

/// Normalization constant of the Riesz fractional gradient,
/// `c_{d,s} = 2^s π^{-d/2} Γ((d+s+1)/2) / Γ((1-s)/2)`.
pub fn riesz_constant(d: u32, s: f64) -> Result<f64> {
    check_order(s)?;
    if d == 0 {
        return domain("dimension must be positive");
    }
    let d = d as f64;
    Ok(2f64.powf(s) * PI.powf(-0.5 * d) * gamma(0.5 * (d + s + 1.0)) / gamma(0.5 * (1.0 - s)))
}

/// Constant of the singular-integral form of `(-Δ)^s`:
/// `C_{d,s} = s 4^s Γ((d+2s)/2) / (π^{d/2} Γ(1-s))`.
pub fn fractional_laplacian_constant(d: u32, s: f64) -> Result<f64> {
    check_order(s)?;
    if d == 0 {
        return domain("dimension must be positive");
    }
    let d = d as f64;
    Ok(s * 4f64.powf(s) * gamma(0.5 * d + s) / (PI.powf(0.5 * d) * gamma(1.0 - s)))
}

/// `C_{1,s} / c_{1,s}^2`: the factor between the `D^s` energy `∫ D^s u D^s v` and the
/// `c^2`-normalized double-difference form. It is also the principal value
/// `∫ κ(0, 1, z) dz` of the d = 1 kernel integrand at unit separation.
pub fn ds_energy_factor(s: f64) -> Result<f64> {
    let c = riesz_constant(1, s)?;
    Ok(fractional_laplacian_constant(1, s)? / (c * c))
}

/// Validated `(d, s, c_{d,s})` triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalParams {
    d: u32,
    s: f64,
    c_ds: f64,
}

impl FractionalParams {
    pub fn new(d: u32, s: f64) -> Result<Self> {
        Ok(Self { d, s, c_ds: riesz_constant(d, s)? })
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn c_ds(&self) -> f64 {
        self.c_ds
    }

    /// Recomputes the constant and compares with the stored value.
    pub fn is_consistent(&self) -> bool {
        riesz_constant(self.d, self.s)
            .map(|c| (c - self.c_ds).abs() <= 1e-12 * self.c_ds)
            .unwrap_or(false)
    }
}

/// Bounded penalty profile `θ: ℝ → [0, 1]`, zero on `t ≤ 0`, nondecreasing, Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PenaltyFunction {
    /// `t / (1 + t)`; `C_θ = 1`.
    Rational,
    /// `(2/π) arctan t`; `C_θ = 2/π`.
    Arctan,
    /// `min(max(t, 0), 1)`; saturates at 1, `C_θ = 1/4`.
    Ramp,
}

impl PenaltyFunction {
    pub const ALL: [PenaltyFunction; 3] = [Self::Rational, Self::Arctan, Self::Ramp];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Rational => "rational",
            Self::Arctan => "arctan",
            Self::Ramp => "ramp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            Self::Rational => {
                if t.is_infinite() {
                    1.0
                } else {
                    t / (1.0 + t)
                }
            }
            Self::Arctan => 2.0 / PI * t.atan(),
            Self::Ramp => t.min(1.0),
        }
    }

    /// Derivative, taking the right-hand piece at kinks.
    pub fn derivative(&self, t: f64) -> f64 {
        if t < 0.0 || t.is_infinite() {
            return 0.0;
        }
        match self {
            Self::Rational => 1.0 / ((1.0 + t) * (1.0 + t)),
            Self::Arctan => 2.0 / PI / (1.0 + t * t),
            Self::Ramp => {
                if t < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Self::Rational | Self::Ramp => 1.0,
            Self::Arctan => 2.0 / PI,
        }
    }

    /// `sup_{t>0} (1 - θ(t)) t`.
    pub fn c_theta(&self) -> f64 {
        match self {
            Self::Rational => 1.0,
            Self::Arctan => 2.0 / PI,
            Self::Ramp => 0.25,
        }
    }

    /// Threshold beyond which `θ ≡ 1`, when there is one.
    pub fn saturation(&self) -> Option<f64> {
        match self {
            Self::Ramp => Some(1.0),
            _ => None,
        }
    }

    /// `θ_ε(t) = θ(t/ε)`.
    pub fn scaled(&self, t: f64, eps: f64) -> f64 {
        self.value(t / eps)
    }

    /// Samples the defining properties on `samples + 1` points of `[-10, 10]`; returns the
    /// observed `max (1-θ(t)) t` over the positive samples on success.
    pub fn validate(&self, samples: usize) -> Result<f64> {
        let samples = samples.max(10_000);
        let mut prev = f64::NEG_INFINITY;
        let mut worst = 0.0f64;
        for k in 0..=samples {
            let t = -10.0 + 20.0 * k as f64 / samples as f64;
            let v = self.value(t);
            if !(0.0..=1.0).contains(&v) {
                return domain(format!("{}: θ({t}) = {v} outside [0,1]", self.name()));
            }
            if t <= 0.0 && v != 0.0 {
                return domain(format!("{}: θ({t}) = {v} should vanish", self.name()));
            }
            if v < prev {
                return domain(format!("{}: θ decreases at {t}", self.name()));
            }
            prev = v;
            if t > 0.0 {
                worst = worst.max((1.0 - v) * t);
            }
        }
        if worst > self.c_theta() + 1e-12 {
            return domain(format!("{}: (1-θ)t reaches {worst} > C_θ", self.name()));
        }
        Ok(worst)
    }
}

/// Continuous piecewise-linear function on a mesh, extended by zero outside the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearFn {
    mesh: Mesh,
    values: Vec<f64>,
}

impl PiecewiseLinearFn {
    pub fn new(mesh: Mesh, values: Vec<f64>) -> Result<Self> {
        mesh.check_len("nodal vector", values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return domain("nodal values must be finite");
        }
        Ok(Self { mesh, values })
    }

    pub fn zero(mesh: Mesh) -> Self {
        Self { mesh, values: vec![0.0; mesh.n()] }
    }

    /// Hat function of dof `i`.
    pub fn hat(mesh: Mesh, i: usize) -> Self {
        let mut values = vec![0.0; mesh.n()];
        values[i] = 1.0;
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at node `k` in `0..=n+1` (boundary nodes are zero).
    pub fn node_value(&self, k: usize) -> f64 {
        if k == 0 || k > self.mesh.n() {
            0.0
        } else {
            self.values[k - 1]
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.mesh.locate(x) {
            None => 0.0,
            Some(e) => {
                let (a, _) = self.mesh.element(e);
                let t = (x - a) / self.mesh.h();
                (1.0 - t) * self.node_value(e) + t * self.node_value(e + 1)
            }
        }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self { mesh: self.mesh, values: self.values.iter().map(|v| alpha * v).collect() }
    }
}

/// `∬ (φ_0(x) - φ_0(y)) (φ_m(x) - φ_m(y)) |x - y|^{-1-2s} dx dy` for two hats `m` nodes apart on
/// a uniform mesh of spacing `h`. The whole-line integral already accounts for the zero
/// extension, so the stiffness matrix of a translation-invariant kernel is Toeplitz.
pub fn hat_interaction(m: usize, s: f64, h: f64) -> f64 {
    let eps = 1.0 - 2.0 * s;
    let scale = h.powf(eps);
    if m >= 3 {
        // Fourth central difference of |t|^{3-2s} written as a B-spline average of its
        // fourth derivative; no cancellation for distant pairs.
        let rule = GaussRule::legendre(12);
        let mf = m as f64;
        let mut acc = 0.0;
        for panel in -2i32..2 {
            let a = panel as f64;
            acc += rule.integrate(a, a + 1.0, |tau| cubic_bspline(tau) * (mf + tau).powf(-1.0 - 2.0 * s));
        }
        return -2.0 * scale * acc;
    }
    const W: [f64; 5] = [1.0, -4.0, 6.0, -4.0, 1.0];
    let args: Vec<f64> = (-2i32..=2).map(|k| (m as i32 + k).unsigned_abs() as f64).collect();
    if eps.abs() > 1e-3 {
        let p = 3.0 - 2.0 * s;
        let sum: f64 = W.iter().zip(&args).map(|(w, a)| w * a.powf(p)).sum();
        scale * sum / (s * eps * (2.0 - 2.0 * s) * (3.0 - 2.0 * s))
    } else {
        // Series in eps = p - 2 around the logarithmic case s = 1/2.
        let mut num = 0.0;
        let mut fact = 1.0;
        for j in 1..=10 {
            fact *= j as f64;
            let sj: f64 = W
                .iter()
                .zip(&args)
                .filter(|(_, a)| **a > 0.0)
                .map(|(w, a)| w * a * a * a.ln().powi(j))
                .sum();
            num += eps.powi(j - 1) / fact * sj;
        }
        scale * num / (0.5 * (1.0 - eps) * (1.0 + eps) * (2.0 + eps))
    }
}

fn cubic_bspline(t: f64) -> f64 {
    let a = t.abs();
    if a >= 2.0 {
        0.0
    } else if a >= 1.0 {
        (2.0 - a).powi(3) / 6.0
    } else {
        (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0
    }
}

/// First column of the Toeplitz Gram matrix of hats, `hat_interaction(m)` for `m in 0..n`.
pub fn hat_interactions(n: usize, s: f64, h: f64) -> Vec<f64> {
    (0..n).map(|m| hat_interaction(m, s, h)).collect()
}

fn toeplitz_form(u: &[f64], v: &[f64], col: &[f64]) -> f64 {
    let n = u.len();
    let mut acc = 0.0;
    for i in 0..n {
        if u[i] == 0.0 {
            continue;
        }
        let row: f64 = (0..n).map(|j| col[i.abs_diff(j)] * v[j]).sum();
        acc += u[i] * row;
    }
    acc
}

/// Gagliardo pairing `∬ (u(x)-u(y)) (v(x)-v(y)) |x-y|^{-1-2s} dx dy` of the zero extensions.
pub fn gagliardo_seminorm_sq(u: &PiecewiseLinearFn, v: &PiecewiseLinearFn, s: f64) -> Result<f64> {
    check_order(s)?;
    if u.mesh != v.mesh {
        return usage("gagliardo pairing needs both functions on the same mesh");
    }
    let col = hat_interactions(u.mesh.n(), s, u.mesh.h());
    Ok(toeplitz_form(&u.values, &v.values, &col))
}

/// `‖D^s u‖² := (c_{1,s}^2 / 2) [u]_s^2`, the energy norm used in all error reports.
pub fn ds_norm_sq(u: &PiecewiseLinearFn, s: f64) -> Result<f64> {
    let c = riesz_constant(1, s)?;
    Ok(0.5 * c * c * gagliardo_seminorm_sq(u, u, s)?)
}

/// Same as [`ds_norm_sq`] for a raw nodal vector.
pub fn ds_norm_sq_nodal(mesh: &Mesh, values: &[f64], s: f64) -> Result<f64> {
    ds_norm_sq(&PiecewiseLinearFn::new(*mesh, values.to_vec())?, s)
}

/// Pointwise Riesz fractional derivative
/// `D^s u(x) = c_{1,s} ∫ (u(x) - u(y)) sign(x-y) |x-y|^{-1-s} dy`.
///
/// Integrating by parts against `∂_y |x-y|^{-s} / s` gives `(c/s) ∫ u'(y) |x-y|^{-s} dy`, which is
/// elementary on every element since `u'` is piecewise constant.
pub fn ds_gradient_at(u: &PiecewiseLinearFn, x: f64, s: f64) -> Result<f64> {
    check_order(s)?;
    let c = riesz_constant(1, s)?;
    Ok(c * ds_gradient_raw(u, x, s))
}

pub(crate) fn ds_gradient_raw(u: &PiecewiseLinearFn, x: f64, s: f64) -> f64 {
    let mesh = &u.mesh;
    let mut acc = 0.0;
    for e in 0..mesh.num_elements() {
        let slope = (u.node_value(e + 1) - u.node_value(e)) / mesh.h();
        if slope != 0.0 {
            let (a, b) = mesh.element(e);
            acc += slope * (riesz_primitive(x - a, s) - riesz_primitive(x - b, s));
        }
    }
    acc / s
}

/// `sign(t) |t|^{1-s} / (1-s)`, an antiderivative of `|t|^{-s}`.
#[inline]
pub(crate) fn riesz_primitive(t: f64, s: f64) -> f64 {
    t.signum() * t.abs().powf(1.0 - s) / (1.0 - s)
}

/// `D^s φ_i(x)` for the hat of dof `i`, in O(1).
pub fn hat_gradient(mesh: &Mesh, i: usize, x: f64, s: f64) -> Result<f64> {
    check_order(s)?;
    let c = riesz_constant(1, s)?;
    Ok(c * hat_gradient_raw(mesh, i, x, s))
}

pub(crate) fn hat_gradient_raw(mesh: &Mesh, i: usize, x: f64, s: f64) -> f64 {
    let h = mesh.h();
    let p = mesh.dof_x(i);
    (riesz_primitive(x - p + h, s) - 2.0 * riesz_primitive(x - p, s) + riesz_primitive(x - p - h, s)) / (s * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_matches_known_values() {
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-14);
        assert!((gamma(5.0) - 24.0).abs() < 1e-11);
        assert!((gamma(0.1) - 9.513_507_698_668_732).abs() < 1e-12);
        assert!((gamma(-0.5) + 2.0 * PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn riesz_constant_rejects_bad_order() {
        assert!(riesz_constant(1, 0.0).is_err());
        assert!(riesz_constant(1, 1.0).is_err());
        assert!(riesz_constant(1, f64::NAN).is_err());
        assert!(riesz_constant(0, 0.5).is_err());
    }

    #[test]
    fn riesz_constant_decreases_towards_one() {
        let mut prev = f64::INFINITY;
        for k in 0..=99 {
            let s = 0.9 + 0.099 * k as f64 / 99.0;
            let c = riesz_constant(1, s).unwrap();
            assert!(c > 0.0 && c < prev);
            prev = c;
        }
    }

    #[test]
    fn params_are_self_consistent() {
        let p = FractionalParams::new(1, 0.3).unwrap();
        assert!(p.is_consistent());
        assert_eq!(p.d(), 1);
    }

    #[test]
    fn penalty_catalog_constants() {
        for p in PenaltyFunction::ALL {
            let observed = p.validate(20_000).unwrap();
            assert!(observed <= p.c_theta() + 1e-12);
        }
        // Ramp attains its maximum at t = 1/2; rational approaches 1 at +∞.
        assert!((PenaltyFunction::Ramp.validate(20_000).unwrap() - 0.25).abs() < 1e-6);
        assert!(PenaltyFunction::Rational.validate(20_000).unwrap() > 0.9);
        assert_eq!(PenaltyFunction::Ramp.saturation(), Some(1.0));
        assert_eq!(PenaltyFunction::from_name("arctan"), Some(PenaltyFunction::Arctan));
    }

    #[test]
    fn hat_interaction_series_branch_near_half() {
        // Reference values from the closed form in 30-digit arithmetic.
        let expected = [5.534_296_980_793_606, -1.198_883_340_683_796, -0.732_624_184_245_455_6];
        for (m, want) in expected.iter().enumerate() {
            let got = hat_interaction(m, 0.4996, 0.1);
            assert!((got - want).abs() < 1e-10 * want.abs(), "m={m} {got} {want}");
        }
        assert!((hat_interaction(0, 0.5, 0.1) - 8.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hat_interaction_far_pairs_match_direct_difference() {
        // m = 3 through both formulas (direct difference has little cancellation there).
        let s = 0.3;
        let h: f64 = 0.05;
        let p = 3.0 - 2.0 * s;
        let w = [1.0, -4.0, 6.0, -4.0, 1.0];
        let direct: f64 = (0..5).map(|k| w[k] * ((1 + k) as f64).powf(p)).sum::<f64>() * h.powf(1.0 - 2.0 * s)
            / (s * (1.0 - 2.0 * s) * (2.0 - 2.0 * s) * (3.0 - 2.0 * s));
        let viaspline = hat_interaction(3, s, h);
        assert!((direct - viaspline).abs() < 1e-10 * direct.abs());
    }

    #[test]
    fn gradient_of_zero_vanishes() {
        let m = Mesh::new(-1.0, 1.0, 7).unwrap();
        let u = PiecewiseLinearFn::zero(m);
        assert_eq!(ds_gradient_at(&u, 0.3, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn hat_gradient_agrees_with_general_path_and_is_odd() {
        let m = Mesh::new(-1.0, 1.0, 9).unwrap();
        let u = PiecewiseLinearFn::hat(m, 4);
        for x in [-2.0, -0.37, 0.0, 0.05, 0.21, 1.3] {
            let a = ds_gradient_at(&u, x, 0.45).unwrap();
            let b = hat_gradient(&m, 4, x, 0.45).unwrap();
            assert!((a - b).abs() < 1e-13 * a.abs().max(1.0), "{x} {a} {b}");
            let mirrored = ds_gradient_at(&u, -x, 0.45).unwrap();
            assert!((a + mirrored).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn mismatched_meshes_rejected() {
        let a = PiecewiseLinearFn::zero(Mesh::new(0.0, 1.0, 3).unwrap());
        let b = PiecewiseLinearFn::zero(Mesh::new(0.0, 1.0, 4).unwrap());
        assert!(matches!(gagliardo_seminorm_sq(&a, &b, 0.5), Err(crate::Error::Usage(_))));
    }
}
