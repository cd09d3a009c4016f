//! Quadrature rules shared by the assembly, kernel and load code.
//!
//! Fixed rules live on the reference interval `[0, 1]`; a Jacobi rule carries the
//! weight `t^alpha` so that endpoint singularities of known order integrate exactly
//! against polynomials.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::num::NonZeroUsize;

use gauss_quad::{GaussJacobi, GaussLegendre};

/// Gauss rule on `[0, 1]` for the weight `t^alpha`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    alpha: f64,
}

impl GaussRule {
    pub fn legendre(degree: usize) -> Self {
        let rule = GaussLegendre::new(NonZeroUsize::new(degree).expect("degree >= 1"));
        let (nodes, weights) = rule
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .unzip();
        Self { nodes, weights, alpha: 0.0 }
    }

    /// Rule exact for `t^alpha p(t)` with `p` a polynomial of degree `< 2 * degree`.
    pub fn jacobi(degree: usize, alpha: f64) -> Self {
        if alpha == 0.0 {
            return Self::legendre(degree);
        }
        // gauss-quad weights (1-x)^a (1+x)^b on [-1, 1]; t = (1+x)/2 gives (1+x)^b = 2^b t^b.
        let rule = GaussJacobi::new(
            NonZeroUsize::new(degree).expect("degree >= 1"),
            0.0.try_into().expect("finite"),
            alpha.try_into().expect("alpha > -1"),
        );
        let scale = 2f64.powf(-alpha - 1.0);
        let (nodes, weights) = rule
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), w * scale))
            .unzip();
        Self { nodes, weights, alpha }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(t, w)` pairs on `[0, 1]`.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// Integrates `(x - a)^alpha * g(x)` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut g: F) -> f64 {
        let len = b - a;
        let scale = len.powf(self.alpha + 1.0);
        scale * self.iter().map(|(t, w)| w * g(a + len * t)).sum::<f64>()
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadEstimate {
    pub value: f64,
    pub abs_err: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Absolute/relative tolerance pair with a subdivision budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadTol {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for QuadTol {
    fn default() -> Self {
        Self { abs: 1e-12, rel: 1e-10, max_intervals: 4000 }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = hl * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * hl, ((kron - gauss) * hl).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err).then(other.a.total_cmp(&self.a))
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) integration over `[a, b]` split at `breaks`.
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, breaks: &[f64], tol: QuadTol) -> QuadEstimate {
    let mut points = vec![a];
    points.extend(breaks.iter().copied().filter(|&p| p > a && p < b));
    points.push(b);
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mut heap = BinaryHeap::new();
    let mut evals = 0;
    for w in points.windows(2) {
        let (value, err) = gk15(&mut f, w[0], w[1]);
        evals += 15;
        heap.push(Panel { a: w[0], b: w[1], value, err });
    }
    loop {
        let total: f64 = heap.iter().map(|p| p.value).sum();
        let err: f64 = heap.iter().map(|p| p.err).sum();
        let target = tol.abs.max(tol.rel * total.abs());
        if err <= target || !err.is_finite() || !total.is_finite() {
            return QuadEstimate { value: total, abs_err: err, evals, converged: err <= target };
        }
        if heap.len() >= tol.max_intervals {
            return QuadEstimate { value: total, abs_err: err, evals, converged: false };
        }
        let worst = heap.pop().expect("nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            let total: f64 = heap.iter().map(|p| p.value).sum();
            let err: f64 = heap.iter().map(|p| p.err).sum();
            return QuadEstimate { value: total, abs_err: err, evals, converged: false };
        }
        for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
            let (value, err) = gk15(&mut f, lo, hi);
            evals += 15;
            heap.push(Panel { a: lo, b: hi, value, err });
        }
    }
}

/// Geometric breakpoints `p ± r, p ± 2r, ...` clipped to `[a, b]`, for integrands that vary on
/// the scale of the distance to `p`.
pub fn geometric_breaks(p: f64, r: f64, a: f64, b: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut d = r;
    while p - d > a || p + d < b {
        if p - d > a {
            out.push(p - d);
        }
        if p + d < b {
            out.push(p + d);
        }
        d *= 2.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let rule = GaussRule::legendre(5);
        let v = rule.integrate(-1.0, 2.0, |x| x.powi(9) - 3.0 * x * x);
        let exact = (2f64.powi(10) - 1.0) / 10.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-10 * exact.abs());
    }

    #[test]
    fn jacobi_handles_endpoint_power() {
        // ∫_0^2 x^{-0.6} (1 + x) dx = 2^{0.4}/0.4 + 2^{1.4}/1.4
        let rule = GaussRule::jacobi(4, -0.6);
        let v = rule.integrate(0.0, 2.0, |x| 1.0 + x);
        let exact = 2f64.powf(0.4) / 0.4 + 2f64.powf(1.4) / 1.4;
        assert!((v - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn adaptive_resolves_peaked_integrand() {
        let est = adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, &[], QuadTol::default());
        let exact = 2.0 * (1.0 / 1e-2) * (1.0f64 / 1e-2).atan();
        assert!(est.converged);
        assert!((est.value - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn geometric_breaks_cover_both_sides() {
        let b = geometric_breaks(0.0, 0.1, -1.0, 0.5);
        assert!(b.contains(&-0.8) && b.contains(&0.4));
        assert!(b.iter().all(|&x| x > -1.0 && x < 0.5));
    }
}
