//! Seeded random problem instances shared by tests, `verify` and the acceptance suite.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discretization::{assemble_stiffness, DiscreteSystem};
use crate::error::Result;
use crate::kernels::{builtin_kernel, Kernel};
use crate::mesh::Mesh;

pub type InstanceRng = ChaCha8Rng;

pub fn rng(seed: u64) -> InstanceRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Kernels drawn by [`random_kernel`]; the quadrature paths are exercised by the last two.
pub const INSTANCE_KERNELS: [&str; 4] = ["fractional", "scaled", "sin_diff", "sin_cos"];

pub fn random_kernel(rng: &mut InstanceRng, s: f64) -> Result<Kernel> {
    let name = INSTANCE_KERNELS[rng.random_range(0..INSTANCE_KERNELS.len())];
    let factor = (name == "scaled").then(|| rng.random_range(0.5..2.0));
    builtin_kernel(name, s, factor)
}

/// Smooth random nodal density: a constant plus two sine modes, amplitude ≤ `amp`.
pub fn random_density(rng: &mut InstanceRng, mesh: &Mesh, amp: f64) -> Vec<f64> {
    let c0 = rng.random_range(-amp..amp);
    let modes: Vec<(f64, f64, f64)> = (0..2)
        .map(|_| (rng.random_range(-amp..amp) / 2.0, rng.random_range(0.5..4.0), rng.random_range(0.0..6.3)))
        .collect();
    mesh.interpolate(|x| c0 + modes.iter().map(|(a, k, p)| a * (k * x + p).sin()).sum::<f64>())
}

/// Concave bump that pokes above `free` (the unconstrained solution) near a random point, so the
/// contact set is typically a proper nonempty subset.
pub fn random_bump(rng: &mut InstanceRng, mesh: &Mesh, free: &[f64]) -> Vec<f64> {
    let n = mesh.n();
    let i0 = rng.random_range(n / 4..=(3 * n / 4).max(n / 4));
    let x0 = mesh.dof_x(i0);
    let lift = rng.random_range(0.02..0.3);
    let curvature = rng.random_range(2.0..20.0);
    (0..n).map(|i| free[i0] + lift - curvature * (mesh.dof_x(i) - x0).powi(2)).collect()
}

/// Upper obstacle: a tilted plane that cuts into `free` somewhere, kept at least 0.05 above `psi`.
pub fn random_upper(rng: &mut InstanceRng, mesh: &Mesh, psi: &[f64], free: &[f64]) -> Vec<f64> {
    let n = mesh.n();
    let i1 = rng.random_range(0..n);
    let level = free[i1] - rng.random_range(0.0..0.2);
    let slope = rng.random_range(-0.5..0.5);
    let x1 = mesh.dof_x(i1);
    psi.iter()
        .enumerate()
        .map(|(i, p)| (level + slope * (mesh.dof_x(i) - x1)).max(p + 0.05))
        .collect()
}

/// Lumped load `b_i = m_i f_i`.
pub fn lumped(system: &DiscreteSystem, f: &[f64]) -> Vec<f64> {
    f.iter().zip(&system.mass_lumped).map(|(f, m)| f * m).collect()
}

/// One-obstacle instance: system with random kernel and load, plus a bump obstacle.
#[derive(Debug, Clone)]
pub struct ObstacleInstance {
    pub seed: u64,
    pub system: DiscreteSystem,
    pub f: Vec<f64>,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Lowest order drawn: below about 0.24 to 0.28 (kernel dependent) the P1 stiffness has positive
/// off-diagonals and the discrete comparison principles no longer hold.
pub const MIN_INSTANCE_ORDER: f64 = 0.3;

/// Draws `s` from `s_choices` (or uniformly in `[MIN_INSTANCE_ORDER, 0.9]` if empty) and a random kernel.
pub fn obstacle_instance(seed: u64, n: usize, s_choices: &[f64]) -> Result<ObstacleInstance> {
    let mut rng = rng(seed);
    let s = if s_choices.is_empty() { rng.random_range(MIN_INSTANCE_ORDER..0.9) } else { s_choices[rng.random_range(0..s_choices.len())] };
    let kernel = random_kernel(&mut rng, s)?;
    let mesh = Mesh::new(-1.0, 1.0, n)?;
    let stiffness = assemble_stiffness(&mesh, &kernel)?;
    let f = random_density(&mut rng, &mesh, 4.0);
    let band = (kernel.a_lower(), kernel.a_upper());
    let mut system = DiscreteSystem::new(mesh, stiffness.matrix, vec![0.0; n], band)?;
    system.clamp = stiffness.clamp;
    let system = system.with_order(s);
    let system = system.with_load(lumped(&system, &f))?;
    let free = system.linear_solve(&system.load)?;
    let psi = random_bump(&mut rng, &mesh, &free);
    let phi = random_upper(&mut rng, &mesh, &psi, &free);
    Ok(ObstacleInstance { seed, system, f, psi, phi })
}

/// `N` random load densities on the instance mesh.
pub fn random_membrane_loads(seed: u64, mesh: &Mesh, count: usize) -> Vec<Vec<f64>> {
    let mut rng = rng(seed ^ 0x6d65_6d62);
    (0..count).map(|_| random_density(&mut rng, mesh, 4.0)).collect()
}
