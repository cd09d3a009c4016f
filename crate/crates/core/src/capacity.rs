//! `(s,a)`-capacitary potentials of compact sets and the capacity comparison bounds.

use crate::discretization::{assemble_stiffness, DiscreteSystem};
use crate::error::{usage, Error, Result};
use crate::fractional::ds_norm_sq_nodal;
use crate::kernels::{fractional_laplacian_kernel, Kernel};
use crate::mesh::Mesh;
use crate::solvers::{solve_psor, ObstacleSet, PsorOptions, UNBOUNDED};

/// Finite union of disjoint closed intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactSet1D {
    intervals: Vec<(f64, f64)>,
}

impl CompactSet1D {
    /// Sorts the intervals; rejects empty lists, reversed endpoints and overlaps.
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return usage("compact set needs at least one interval");
        }
        if let Some((a, b)) = intervals.iter().find(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
            return usage(format!("bad interval [{a}, {b}]"));
        }
        intervals.sort_by(|p, q| p.0.total_cmp(&q.0));
        if let Some(w) = intervals.windows(2).find(|w| w[0].1 >= w[1].0) {
            return usage(format!("intervals [{}, {}] and [{}, {}] are not disjoint", w[0].0, w[0].1, w[1].0, w[1].1));
        }
        Ok(Self { intervals })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![(a, b)])
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|(a, b)| (*a..=*b).contains(&x))
    }

    pub fn distance(&self, x: f64) -> f64 {
        self.intervals.iter().map(|(a, b)| (a - x).max(x - b).max(0.0)).fold(f64::INFINITY, f64::min)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.intervals.iter().all(|(a, b)| other.intervals.iter().any(|(c, d)| c <= a && b <= d))
    }

    pub fn describe(&self) -> String {
        self.intervals.iter().map(|(a, b)| format!("[{a},{b}]")).collect::<Vec<_>>().join("u")
    }

    fn check_inside(&self, mesh: &Mesh) -> Result<()> {
        match self.intervals.iter().find(|(a, b)| *a <= mesh.x_lo() || *b >= mesh.x_hi()) {
            Some((a, b)) => usage(format!("interval [{a}, {b}] is not strictly inside ({}, {})", mesh.x_lo(), mesh.x_hi())),
            None => Ok(()),
        }
    }

    /// Dofs constrained to 1: each interval is widened to the enclosing nodes.
    pub fn snapped_dofs(&self, mesh: &Mesh) -> Result<(Vec<usize>, Vec<(f64, f64)>)> {
        self.check_inside(mesh)?;
        let h = mesh.h();
        let mut dofs = Vec::new();
        let mut snapped = Vec::new();
        for &(a, b) in &self.intervals {
            // node k sits at x_lo + k h; dof i = k - 1
            let k_lo = (((a - mesh.x_lo()) / h) * (1.0 + 1e-14)).floor().max(1.0) as usize;
            let k_hi = ((((b - mesh.x_lo()) / h) * (1.0 - 1e-14)).ceil() as usize).min(mesh.n());
            let k_lo = k_lo.min(k_hi);
            snapped.push((mesh.node(k_lo), mesh.node(k_hi)));
            dofs.extend((k_lo..=k_hi).map(|k| k - 1));
        }
        dofs.sort_unstable();
        dofs.dedup();
        Ok((dofs, snapped))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    pub potential: Vec<f64>,
    /// `uᵀ A u`.
    pub capacity: f64,
    /// `μ = A u`.
    pub measure: Vec<f64>,
    pub set: CompactSet1D,
    pub snapped: Vec<(f64, f64)>,
    pub constrained: Vec<usize>,
    pub converged: bool,
}

impl CapacityResult {
    pub fn total_measure(&self) -> f64 {
        self.measure.iter().sum()
    }

    /// `Σ_{i ∈ K-nodes} μ_i`.
    pub fn measure_on_set(&self) -> f64 {
        self.constrained.iter().map(|&i| self.measure[i]).sum()
    }

    /// `Σ |μ_i|` over dofs farther than one cell from the snapped set.
    pub fn measure_off_support(&self, mesh: &Mesh) -> f64 {
        let snapped = CompactSet1D { intervals: self.snapped.clone() };
        (0..mesh.n())
            .filter(|&i| snapped.distance(mesh.dof_x(i)) > mesh.h() * (1.0 + 1e-12))
            .map(|i| self.measure[i].abs())
            .sum()
    }
}

/// Solves `u ≥ 1` on the nodes of `K` with zero load.
pub fn capacitary_potential(system: &DiscreteSystem, set: &CompactSet1D, tol: f64) -> Result<CapacityResult> {
    let (constrained, snapped) = set.snapped_dofs(&system.mesh)?;
    let n = system.n();
    let mut psi = vec![-UNBOUNDED; n];
    for &i in &constrained {
        psi[i] = 1.0;
    }
    let sys = system.with_load(vec![0.0; n])?;
    let opts = PsorOptions { tol, ..PsorOptions::default() };
    let result = solve_psor(&sys, &ObstacleSet::lower(psi), &opts)?;
    let measure = sys.apply(&result.u);
    let capacity = result.u.iter().zip(&measure).map(|(u, m)| u * m).sum();
    Ok(CapacityResult {
        potential: result.u,
        capacity,
        measure,
        set: set.clone(),
        snapped,
        constrained,
        converged: result.converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityBoundsReport {
    pub set: String,
    pub kernel: String,
    /// `C_s(K)` from the `c^2 |x-y|^{-1-2s}` kernel.
    pub c_s: f64,
    /// `C_s^a(K)`.
    pub c_sa: f64,
    pub a_lower: f64,
    pub a_upper: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub lower_margin: f64,
    pub upper_margin: f64,
    pub pass: bool,
}

/// Checks `a_* C_s(K) ≤ C_s^a(K) ≤ (a^{*2} / a_*) C_s(K)` on `mesh`.
pub fn capacity_bounds_check(set: &CompactSet1D, kernel: &Kernel, mesh: &Mesh) -> Result<CapacityBoundsReport> {
    let s = kernel.s();
    let reference = fractional_laplacian_kernel(s)?;
    let solve = |k: &Kernel| -> Result<CapacityResult> {
        let a = assemble_stiffness(mesh, k)?.matrix;
        let sys = DiscreteSystem::new(*mesh, a, vec![0.0; mesh.n()], (k.a_lower(), k.a_upper()))?.with_order(s);
        let r = capacitary_potential(&sys, set, 1e-12)?;
        if !r.converged {
            return Err(Error::NumericalFailure(format!("capacitary potential for {} did not converge", k.name())));
        }
        Ok(r)
    };
    let c_s = solve(&reference)?.capacity;
    let c_sa = solve(kernel)?.capacity;
    let (lo, hi) = (kernel.a_lower(), kernel.a_upper());
    let lower_bound = lo * c_s;
    let upper_bound = hi * hi / lo * c_s;
    let tol = 1e-10 * upper_bound.abs().max(1.0);
    Ok(CapacityBoundsReport {
        set: set.describe(),
        kernel: kernel.name().to_string(),
        c_s,
        c_sa,
        a_lower: lo,
        a_upper: hi,
        lower_bound,
        upper_bound,
        lower_margin: c_sa - lower_bound,
        upper_margin: upper_bound - c_sa,
        pass: c_sa >= lower_bound - tol && c_sa <= upper_bound + tol,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleCapacityReport {
    /// `μ(K) = Σ_{K-nodes} (A u - b)_i` for the `ψ`-obstacle solution.
    pub mu_k: f64,
    pub capacity: f64,
    /// `‖ψ^+ interpolant‖_{H^s_0}`, an upper bound for the `L^2_{C_s}` norm.
    pub psi_norm_proxy: f64,
    pub ratio: f64,
    /// `(a^{*2} / a_*^{3/2}) · proxy`.
    pub ratio_bound: f64,
    pub slack: f64,
    /// `‖u‖_{H^s_0}` against `(a^* / a_*) · proxy`.
    pub energy_norm: f64,
    pub energy_bound: f64,
    pub pass: bool,
}

/// Measure of `K` under the obstacle problem for `psi ≥ 0`, compared with the capacity estimate.
pub fn obstacle_capacity_estimate(system: &DiscreteSystem, psi: &[f64], set: &CompactSet1D) -> Result<ObstacleCapacityReport> {
    system.mesh.check_len("psi", psi.len())?;
    let cap = capacitary_potential(system, set, 1e-12)?;
    let sys = system.with_load(vec![0.0; system.n()])?;
    let solved = solve_psor(&sys, &ObstacleSet::lower(psi.to_vec()), &PsorOptions { tol: 1e-12, ..PsorOptions::default() })?;
    if !solved.converged {
        return Err(Error::NumericalFailure("obstacle solve did not converge".into()));
    }
    let s = system_order(system)?;
    let mu = sys.apply(&solved.u);
    let mu_k: f64 = cap.constrained.iter().map(|&i| mu[i]).sum();
    let psi_plus: Vec<f64> = psi.iter().map(|v| v.max(0.0)).collect();
    let proxy = ds_norm_sq_nodal(&system.mesh, &psi_plus, s)?.sqrt();
    let (lo, hi) = system.band;
    let ratio = if cap.capacity > 0.0 { mu_k / cap.capacity.sqrt() } else { 0.0 };
    let ratio_bound = hi * hi / lo.powf(1.5) * proxy;
    let energy_norm = ds_norm_sq_nodal(&system.mesh, &solved.u, s)?.sqrt();
    let energy_bound = hi / lo * proxy;
    let tol = 1e-9 * (1.0 + ratio_bound);
    Ok(ObstacleCapacityReport {
        mu_k,
        capacity: cap.capacity,
        psi_norm_proxy: proxy,
        ratio,
        ratio_bound,
        slack: ratio_bound - ratio,
        energy_norm,
        energy_bound,
        pass: ratio <= ratio_bound + tol && energy_norm <= energy_bound + tol,
    })
}

fn system_order(system: &DiscreteSystem) -> Result<f64> {
    system.order.ok_or_else(|| Error::Usage("system carries no fractional order; use with_order".into()))
}
