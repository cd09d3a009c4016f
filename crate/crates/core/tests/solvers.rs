use fracobs::discretization::{assemble_stiffness, DiscreteSystem};
use fracobs::fractional::PenaltyFunction;
use fracobs::instances::{obstacle_instance, random_membrane_loads};
use fracobs::kernels::fractional_laplacian_kernel;
use fracobs::mesh::Mesh;
use fracobs::solvers::*;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn fractional_system(n: usize, s: f64, f: f64) -> DiscreteSystem {
    let mesh = Mesh::new(-1.0, 1.0, n).unwrap();
    let k = fractional_laplacian_kernel(s).unwrap();
    let a = assemble_stiffness(&mesh, &k).unwrap().matrix;
    let h = mesh.h();
    DiscreteSystem::new(mesh, a, vec![f * h; n], (1.0, 1.0)).unwrap()
}

#[test]
fn psor_matches_enumeration() {
    for seed in 0..30 {
        let n = 2 + (seed as usize % 7);
        let inst = obstacle_instance(seed, n, &[]).unwrap();
        let obs = ObstacleSet::lower(inst.psi.clone());
        let exact = lcp_oracle(&inst.system, &obs).unwrap();
        let r = solve_psor(&inst.system, &obs, &PsorOptions::default()).unwrap();
        assert!(r.converged);
        assert!(max_diff(&r.u, &exact.u) < 1e-8, "seed {seed}");
    }
}

#[test]
fn two_obstacle_psor_and_penalty_match_enumeration() {
    for seed in 100..120 {
        let n = 2 + (seed as usize % 7);
        let inst = obstacle_instance(seed, n, &[]).unwrap();
        let obs = ObstacleSet::two_sided(inst.psi.clone(), inst.phi.clone());
        let exact = lcp_oracle(&inst.system, &obs).unwrap();
        let rev = lcp_oracle_ordered(&inst.system, &obs, EnumerationOrder::Reverse).unwrap();
        assert!(max_diff(&exact.u, &rev.u) < 1e-10);
        let r = solve_two_obstacles(&inst.system, &obs, &TwoObstacleMethod::Psor(PsorOptions::default())).unwrap();
        assert!(max_diff(&r.u, &exact.u) < 1e-8, "seed {seed}");
        let eps = 1e-3;
        // the sandwich needs a saturating profile
        let cfg = TwoPenaltyConfig {
            theta: PenaltyFunction::Ramp,
            epsilon: eps,
            zeta_lower: minimal_zeta(&inst.system, &inst.psi),
            zeta_upper: minimal_zeta_upper(&inst.system, &inst.phi),
        };
        let p = solve_two_obstacles(&inst.system, &obs, &TwoObstacleMethod::Penalized(cfg, NewtonOptions::default())).unwrap();
        for i in 0..n {
            assert!(p.u[i] >= inst.psi[i] - 1e-9 && p.u[i] <= inst.phi[i] + eps + 1e-9, "seed {seed}");
        }
    }
}

#[test]
fn scalar_oracle_is_a_max() {
    let sys = fractional_system(1, 0.5, 3.0);
    let a = sys.stiffness[(0, 0)];
    for psi in [-1.0, 0.0, 10.0] {
        let sol = lcp_oracle(&sys, &ObstacleSet::lower(vec![psi])).unwrap();
        assert!((sol.u[0] - (sys.load[0] / a).max(psi)).abs() < 1e-14);
    }
}

#[test]
fn inactive_obstacle_gives_zero_and_positive_load_gives_positive_solution() {
    let sys = fractional_system(16, 0.4, 0.0);
    let r = solve_psor(&sys, &ObstacleSet::lower(vec![-1e6; 16]), &PsorOptions::default()).unwrap();
    assert!(r.u.iter().all(|v| v.abs() < 1e-12));
    let sys = fractional_system(16, 0.4, 1.0);
    let r = solve_psor(&sys, &ObstacleSet::lower(vec![-1e6; 16]), &PsorOptions::default()).unwrap();
    assert!(r.u.iter().all(|v| *v >= 0.0));
}

#[test]
fn penalized_sandwich_and_monotone_in_epsilon() {
    let inst = obstacle_instance(5, 24, &[0.6]).unwrap();
    let sys = &inst.system;
    let exact = solve_psor(sys, &ObstacleSet::lower(inst.psi.clone()), &PsorOptions::default()).unwrap();
    let zeta = minimal_zeta(sys, &inst.psi);
    let mut prev: Option<Vec<f64>> = None;
    for eps in [0.1, 0.05, 0.025] {
        let cfg = PenalizationConfig { theta: PenaltyFunction::Ramp, epsilon: eps, zeta: zeta.clone() };
        let up = solve_penalized(sys, &inst.psi, &cfg, &NewtonOptions::default()).unwrap();
        let lo = solve_penalized_lower(sys, &inst.psi, &cfg, &NewtonOptions::default()).unwrap();
        assert!(up.converged && lo.converged);
        for i in 0..sys.n() {
            assert!(lo.u[i] <= exact.u[i] + 1e-8 && exact.u[i] <= up.u[i] + 1e-8);
            assert!(up.u[i] - lo.u[i] <= eps + 1e-8 && up.u[i] - lo.u[i] >= -1e-8);
        }
        if let Some(p) = &prev {
            assert!(p.iter().zip(&up.u).all(|(a, b)| a >= &(b - 1e-8)));
        }
        prev = Some(up.u);
    }
}

#[test]
fn inactive_penalization_is_the_linear_solve() {
    let sys = fractional_system(12, 0.7, 2.0);
    let psi = vec![-1e6; 12];
    let lin = sys.linear_solve(&sys.load).unwrap();
    let cfg = PenalizationConfig { theta: PenaltyFunction::Arctan, epsilon: 1.0, zeta: minimal_zeta(&sys, &psi) };
    let up = solve_penalized(&sys, &psi, &cfg, &NewtonOptions::default()).unwrap();
    assert!(max_diff(&up.u, &lin) < 1e-10);
}

#[test]
fn membranes_match_kkt_enumeration() {
    for seed in 0..10u64 {
        let inst = obstacle_instance(seed, 4 + seed as usize % 3, &[]).unwrap();
        let count = 2 + seed as usize % 2;
        let loads: Vec<Vec<f64>> = random_membrane_loads(seed, &inst.system.mesh, count)
            .iter()
            .map(|f| fracobs::instances::lumped(&inst.system, f))
            .collect();
        if (count - 1) * inst.system.n() > 16 {
            continue;
        }
        let exact = membranes_oracle(&inst.system, &loads).unwrap();
        let r = solve_n_membranes(&inst.system, &loads, &MembraneMethod::default()).unwrap();
        assert!(r.converged);
        for (a, b) in r.u.iter().zip(&exact) {
            assert!(max_diff(a, b) < 1e-8, "seed {seed}");
        }
    }
}

#[test]
fn equal_loads_collapse_to_the_single_problem() {
    let sys = fractional_system(6, 0.5, 1.5);
    let loads = vec![sys.load.clone(), sys.load.clone()];
    let r = solve_n_membranes(&sys, &loads, &MembraneMethod::default()).unwrap();
    let lin = sys.linear_solve(&sys.load).unwrap();
    assert!(max_diff(&r.u[0], &lin) < 1e-9 && max_diff(&r.u[1], &lin) < 1e-9);
}

#[test]
fn penalized_membranes_are_nearly_ordered() {
    let sys = fractional_system(10, 0.5, 0.0);
    let h = sys.mesh.h();
    let loads = vec![vec![0.0; 10], vec![h; 10], vec![2.0 * h; 10]];
    let eps = 1e-3;
    let m = MembraneMethod::Penalized { theta: PenaltyFunction::Ramp, epsilon: eps, newton: NewtonOptions::default() };
    let p = solve_n_membranes(&sys, &loads, &m).unwrap();
    assert!(p.converged);
    let g = solve_n_membranes(&sys, &loads, &MembraneMethod::default()).unwrap();
    for k in 0..10 {
        assert!(p.u[0][k] >= p.u[1][k] - eps - 1e-9 && p.u[1][k] >= p.u[2][k] - eps - 1e-9);
        for j in 0..3 {
            assert!((p.u[j][k] - g.u[j][k]).abs() < 0.05);
        }
    }
}

#[test]
fn small_order_stiffness_is_not_a_z_matrix() {
    use fracobs::fractional::hat_interaction;
    assert!(hat_interaction(1, 0.2, 1.0) > 0.0);
    assert!(hat_interaction(1, 0.25, 1.0) < 0.0);
    let mesh = Mesh::new(-1.0, 1.0, 12).unwrap();
    let st = assemble_stiffness(&mesh, &fractional_laplacian_kernel(0.15).unwrap()).unwrap();
    assert!(st.clamp.unclamped_positive > 0.0);
    let st = assemble_stiffness(&mesh, &fractional_laplacian_kernel(0.3).unwrap()).unwrap();
    assert_eq!(st.clamp.unclamped_positive, 0.0);
}
