//! Assembly checked against brute-force double-exponential quadrature of the defining integrals.

use fracobs::discretization::*;
use fracobs::exec::Exec;
use fracobs::fractional::{ds_norm_sq_nodal, hat_gradient, riesz_constant};
use fracobs::kernels::{fractional_laplacian_kernel, sin_cos_kernel, sin_diff_kernel, Kernel};
use fracobs::mesh::Mesh;
use proptest::prelude::*;

/// Integral over `[a, b]` split at `breaks`.
fn de<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64]) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|p| *p > a && *p < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    pts.windows(2).map(|w| quadrature::double_exponential::integrate(&f, w[0], w[1], 1e-14).integral).sum()
}

/// `∫_0^b t^α F(t) dt` for `α > -1` and piecewise-smooth `F`, through `t = u^m`, `m = 1/(1+α)`,
/// which removes the endpoint singularity.
fn de_power<F: Fn(f64) -> f64>(alpha: f64, f: F, b: f64, breaks: &[f64]) -> f64 {
    let m = 1.0 / (1.0 + alpha);
    let mapped: Vec<f64> = breaks.iter().filter(|p| **p > 0.0).map(|p| p.powf(1.0 / m)).collect();
    m * de(|u| f(u.powf(m)), 0.0, b.powf(1.0 / m), &mapped)
}

fn hat(h: f64, x: f64) -> f64 {
    (1.0 - x.abs() / h).max(0.0)
}

/// Length of `[q + lo, q + hi] ∩ [a, b]`, with the endpoints taken relative to `q` so that short
/// intervals keep full relative accuracy.
fn overlap(q: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    (hi.min(b - q) - lo.max(a - q)).max(0.0)
}

/// `φ(q + hi) - φ(q + lo)` for the hat at 0, summed over its two linear pieces.
fn rise(h: f64, q: f64, lo: f64, hi: f64) -> f64 {
    (overlap(q, lo, hi, -h, 0.0) - overlap(q, lo, hi, 0.0, h)) / h
}

/// `∬ (φ(x) - φ(y)) (φ_d(x) - φ_d(y)) |x - y|^{-1-2s}` for two hats `d` apart.
fn gagliardo_hats(h: f64, d: f64, s: f64) -> f64 {
    let d = d.abs();
    let kinks = [-h, 0.0, h, d - h, d, d + h];
    let g = |t: f64| {
        let breaks: Vec<f64> = kinks.iter().flat_map(|k| [*k, k - t]).collect();
        de(|x| rise(h, x, 0.0, t) * rise(h, x - d, 0.0, t), -h - t, d + h, &breaks)
    };
    let top = d + 2.0 * h;
    let r0 = de(|x| hat(h, x) * hat(h, x - d), -h, h, &[0.0, d - h, d]);
    let near = de_power(1.0 - 2.0 * s, |t| g(t) / (t * t), top, &[h, 2.0 * h, d - 2.0 * h, d - h, d, d + h]);
    2.0 * near + 2.0 * r0 * top.powf(-2.0 * s) / s
}

/// `D^s φ(x)` for the hat centred at `p`, as `c ∫_0^∞ t^{-1-s} (φ(x+t) - φ(x-t)) dt`.
fn ds_hat(h: f64, p: f64, x: f64, s: f64) -> f64 {
    let r = x - p;
    let top = r.abs() + h;
    let f = |t: f64| rise(h, r, -t, t) / t;
    riesz_constant(1, s).unwrap() * de_power(-s, f, top, &[(r - h).abs(), r.abs(), (r + h).abs()])
}

fn quad_only() -> AssemblyOptions {
    AssemblyOptions { exec: Exec::Sequential, exact_fractional: false }
}

#[test]
fn single_hat_seminorm() {
    // At s = 1/2 the seminorm of a hat is scale free and equals 8 ln 2.
    for h in [0.1, 0.37] {
        let g = gagliardo_hats(h, 0.0, 0.5);
        assert!((g - 8.0 * 2f64.ln()).abs() < 1e-11 * g, "h={h}: {g}");
    }
    let mesh = Mesh::new(-1.0, 1.0, 1).unwrap();
    let c = riesz_constant(1, 0.5).unwrap();
    let a = assemble_stiffness(&mesh, &fractional_laplacian_kernel(0.5).unwrap()).unwrap().matrix;
    assert!((a[(0, 0)] - 4.0 * c * c * 2f64.ln()).abs() < 1e-12 * a[(0, 0)]);
}

#[test]
fn fractional_matrix_matches_double_integrals() {
    for s in [0.3, 0.5, 0.8] {
        let mesh = Mesh::new(-1.0, 1.0, 6).unwrap();
        let h = mesh.h();
        let c = riesz_constant(1, s).unwrap();
        let oracle: Vec<f64> = (0..6).map(|m| 0.5 * c * c * gagliardo_hats(h, m as f64 * h, s)).collect();
        let k = fractional_laplacian_kernel(s).unwrap();
        let exact = assemble_stiffness(&mesh, &k).unwrap().matrix;
        let quad = assemble_stiffness_with(&mesh, &k, &quad_only()).unwrap().matrix;
        let sym = assemble_stiffness_symmetric_with(&mesh, &k, &quad_only()).unwrap().matrix;
        let scale = oracle[0];
        for i in 0..6usize {
            for j in 0..6 {
                let want = oracle[i.abs_diff(j)];
                assert!((exact[(i, j)] - want).abs() < 1e-9 * scale, "s={s} ({i},{j}) {} vs {want}", exact[(i, j)]);
                assert!((quad[(i, j)] - want).abs() < 1e-6 * scale, "s={s} ({i},{j}) {} vs {want}", quad[(i, j)]);
                assert!((sym[(i, j)] - want).abs() < 1e-6 * scale, "s={s} ({i},{j}) {} vs {want}", sym[(i, j)]);
            }
        }
    }
}

/// For hats with disjoint supports, `A[i][j] = -∬ φ_i(x) φ_j(y) a(x, y)`.
fn separated_entry(mesh: &Mesh, k: &Kernel, i: usize, j: usize) -> f64 {
    let h = mesh.h();
    let (pi, pj) = (mesh.dof_x(i), mesh.dof_x(j));
    let inner = |x: f64| de(|y| hat(h, y - pj) * k.evaluate(x, y), pj - h, pj + h, &[pj]);
    -de(|x| hat(h, x - pi) * inner(x), pi - h, pi + h, &[pi])
}

#[test]
fn general_kernels_far_field_entries() {
    let mesh = Mesh::new(-1.0, 1.0, 8).unwrap();
    for k in [sin_cos_kernel(0.6).unwrap(), sin_diff_kernel(0.4).unwrap()] {
        let a = assemble_stiffness_with(&mesh, &k, &quad_only()).unwrap().matrix;
        for (i, j) in [(0, 3), (3, 0), (1, 7), (6, 2), (2, 5)] {
            let want = separated_entry(&mesh, &k, i, j);
            assert!((a[(i, j)] - want).abs() < 1e-7 * want.abs(), "{} ({i},{j}) {} vs {want}", k.name(), a[(i, j)]);
        }
    }
}

#[test]
fn hat_gradient_matches_principal_value() {
    let mesh = Mesh::new(0.0, 1.0, 4).unwrap();
    let h = mesh.h();
    for s in [0.2, 0.5, 0.9] {
        for x in [-0.7, 0.05, 0.2, 0.31, 0.4, 0.55, 1.3] {
            let want = ds_hat(h, mesh.dof_x(1), x, s);
            let got = hat_gradient(&mesh, 1, x, s).unwrap();
            assert!((got - want).abs() < 1e-9 * want.abs().max(1e-3), "s={s} x={x} {got} vs {want}");
        }
        assert!(hat_gradient(&mesh, 1, mesh.dof_x(1), s).unwrap().abs() < 1e-12);
    }
}

#[test]
fn vector_load_matches_nested_quadrature() {
    let s = 0.6;
    let mesh = Mesh::new(-1.0, 1.0, 5).unwrap();
    let h = mesh.h();
    let fv = |x: f64| x.cos() * (1.0 - x * x).max(0.0).powi(2);
    let data = LoadData { f_sharp: ScalarField::constant(0.0), f_vec: Some(ScalarField::function(fv)) };
    let b = assemble_load(&mesh, &data, s).unwrap();
    for (i, bi) in b.iter().enumerate() {
        let p = mesh.dof_x(i);
        let want = de(|x| fv(x) * ds_hat(h, p, x, s), -1.0, 1.0, &[p - h, p, p + h]);
        assert!((bi - want).abs() < 1e-8 * want.abs().max(1e-6), "dof {i}: {bi} vs {want}");
    }
}

#[test]
fn scalar_load_matches_quadrature() {
    let mesh = Mesh::new(0.0, 2.0, 7).unwrap();
    let h = mesh.h();
    let f = |x: f64| 1.0 + x * x;
    let b = assemble_load(&mesh, &LoadData::sharp(ScalarField::function(f)), 0.5).unwrap();
    for (i, bi) in b.iter().enumerate() {
        let p = mesh.dof_x(i);
        let want = de(|x| f(x) * hat(h, x - p), p - h, p + h, &[p]);
        assert!((bi - want).abs() < 1e-12, "dof {i}: {bi} vs {want}");
    }
}

fn fractional_system(n: usize, s: f64) -> DiscreteSystem {
    let mesh = Mesh::new(-1.0, 1.0, n).unwrap();
    DiscreteSystem::assemble(mesh, &fractional_laplacian_kernel(s).unwrap(), &LoadData::zero()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn form_is_bilinear_and_cauchy_schwarz(
        s in 0.3f64..0.95,
        u in prop::collection::vec(-1.0f64..1.0, 10),
        v in prop::collection::vec(-1.0f64..1.0, 10),
        w in prop::collection::vec(-1.0f64..1.0, 10),
        alpha in -3.0f64..3.0,
    ) {
        let sys = fractional_system(10, s);
        let uu = sys.form(&u, &u);
        let vv = sys.form(&v, &v);
        let uv = sys.form(&u, &v);
        prop_assert!(uv * uv <= uu * vv * (1.0 + 1e-12) + 1e-300);
        prop_assert!((uv - sys.form(&v, &u)).abs() <= 1e-12 * (uu * vv).sqrt());
        let mix: Vec<f64> = u.iter().zip(&w).map(|(a, b)| alpha * a + b).collect();
        let lhs = sys.form(&mix, &v);
        let rhs = alpha * uv + sys.form(&w, &v);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn energy_norm_is_the_form(s in 0.3f64..0.95, u in prop::collection::vec(-1.0f64..1.0, 8)) {
        let sys = fractional_system(8, s);
        let e = ds_norm_sq_nodal(&sys.mesh, &u, s).unwrap();
        prop_assert!((e - sys.form(&u, &u)).abs() <= 1e-10 * e.max(1e-12));
    }
}
