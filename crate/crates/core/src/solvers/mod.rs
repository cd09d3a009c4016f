//! Discrete variational-inequality solvers and their brute-force oracles.

mod lcp;
mod membranes;
mod penalty;
mod psor;

pub use lcp::{lcp_oracle, lcp_oracle_ordered, EnumerationOrder, LcpSolution, NodeState};
pub use membranes::{
    membrane_weights, membranes_oracle, solve_n_membranes, MembraneMethod, MembraneResult, MembraneWeights,
};
pub use penalty::{
    minimal_zeta, minimal_zeta_upper, solve_penalized, solve_penalized_lower, NewtonOptions, PenalizationConfig,
    TwoPenaltyConfig,
};
pub use psor::{solve_psor, solve_psor_from, solve_two_obstacles, PsorOptions, TwoObstacleMethod};

use crate::discretization::DiscreteSystem;
use crate::error::{usage, Result};

/// Obstacle entries at or beyond this magnitude mean "no constraint".
pub const UNBOUNDED: f64 = 1e18;

#[inline]
pub fn is_bound(v: f64) -> bool {
    v.abs() < UNBOUNDED
}

/// Lower obstacle `ψ_h` and optional upper obstacle `φ_h`, nodal.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleSet {
    pub lower: Vec<f64>,
    pub upper: Option<Vec<f64>>,
}

impl ObstacleSet {
    pub fn lower(psi: Vec<f64>) -> Self {
        Self { lower: psi, upper: None }
    }

    pub fn two_sided(psi: Vec<f64>, phi: Vec<f64>) -> Self {
        Self { lower: psi, upper: Some(phi) }
    }

    pub fn unconstrained(n: usize) -> Self {
        Self::lower(vec![-UNBOUNDED; n])
    }

    pub fn lo(&self, i: usize) -> f64 {
        let v = self.lower[i];
        if v <= -UNBOUNDED {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    pub fn hi(&self, i: usize) -> f64 {
        match &self.upper {
            Some(u) if u[i] < UNBOUNDED => u[i],
            _ => f64::INFINITY,
        }
    }

    pub fn project(&self, i: usize, v: f64) -> f64 {
        v.max(self.lo(i)).min(self.hi(i))
    }

    /// Checks lengths, NaNs and `ψ ≤ φ`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.lower.len() != n || self.upper.as_ref().is_some_and(|u| u.len() != n) {
            return usage(format!("obstacle vectors must have length {n}"));
        }
        if self.lower.iter().chain(self.upper.iter().flatten()).any(|v| v.is_nan()) {
            return usage("obstacle contains NaN");
        }
        if let Some(i) = (0..n).find(|&i| self.lo(i) > self.hi(i)) {
            return usage(format!("admissible set is empty: lower {} > upper {} at dof {i}", self.lo(i), self.hi(i)));
        }
        Ok(())
    }
}

/// Outcome of a VI solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub u: Vec<f64>,
    /// `A u - b`.
    pub residual: Vec<f64>,
    pub active_lower: Vec<usize>,
    pub active_upper: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Max nodal update per iteration.
    pub history: Vec<f64>,
    pub method: String,
}

impl SolveResult {
    pub(crate) fn finish(
        system: &DiscreteSystem,
        obstacles: &ObstacleSet,
        u: Vec<f64>,
        iterations: usize,
        converged: bool,
        history: Vec<f64>,
        act_tol: f64,
        method: &str,
    ) -> Self {
        let residual = system.residual(&u);
        let active_lower = (0..u.len()).filter(|&i| (u[i] - obstacles.lo(i)).abs() <= act_tol).collect();
        let active_upper = (0..u.len()).filter(|&i| (obstacles.hi(i) - u[i]).abs() <= act_tol).collect();
        Self { u, residual, active_lower, active_upper, iterations, converged, history, method: method.to_string() }
    }
}
