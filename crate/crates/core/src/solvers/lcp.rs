//! Exhaustive active-set enumeration for tiny complementarity problems.

use nalgebra::{DMatrix, DVector};

use crate::discretization::DiscreteSystem;
use crate::error::{usage, Error, Result};

use super::ObstacleSet;

/// Largest system the enumeration accepts (3^10 configurations).
pub const ORACLE_MAX_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeState {
    AtLower,
    Free,
    AtUpper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnumerationOrder {
    #[default]
    Forward,
    Reverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcpSolution {
    pub u: Vec<f64>,
    pub states: Vec<NodeState>,
}

/// Exact solution by enumerating every lower/free/upper configuration.
pub fn lcp_oracle(system: &DiscreteSystem, obstacles: &ObstacleSet) -> Result<LcpSolution> {
    lcp_oracle_ordered(system, obstacles, EnumerationOrder::Forward)
}

pub fn lcp_oracle_ordered(system: &DiscreteSystem, obstacles: &ObstacleSet, order: EnumerationOrder) -> Result<LcpSolution> {
    let n = system.n();
    if n > ORACLE_MAX_N {
        return usage(format!("enumeration oracle accepts n <= {ORACLE_MAX_N}, got {n}"));
    }
    obstacles.validate(n)?;
    let a = &system.stiffness;
    let b = &system.load;
    let total = 3usize.pow(n as u32);
    let scale_b = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for idx in 0..total {
        let code = match order {
            EnumerationOrder::Forward => idx,
            EnumerationOrder::Reverse => total - 1 - idx,
        };
        let states = decode(code, n);
        let Some(u) = solve_configuration(a, b, obstacles, &states) else { continue };
        let scale = scale_b + a.amax() * u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let tol_r = 1e-10 * scale;
        let tol_u = 1e-10 * u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let r = system.residual(&u);
        let ok = (0..n).all(|i| {
            let inside = u[i] >= obstacles.lo(i) - tol_u && u[i] <= obstacles.hi(i) + tol_u;
            let sign = match states[i] {
                NodeState::AtLower => r[i] >= -tol_r,
                NodeState::AtUpper => r[i] <= tol_r,
                NodeState::Free => true,
            };
            inside && sign
        });
        if ok {
            return Ok(LcpSolution { u, states });
        }
    }
    Err(Error::Infeasible("no active-set configuration satisfies complementarity".into()))
}

fn decode(mut code: usize, n: usize) -> Vec<NodeState> {
    (0..n)
        .map(|_| {
            let s = match code % 3 {
                0 => NodeState::Free,
                1 => NodeState::AtLower,
                _ => NodeState::AtUpper,
            };
            code /= 3;
            s
        })
        .collect()
}

/// Fixes active dofs at their obstacle and solves the free block by LU.
fn solve_configuration(a: &DMatrix<f64>, b: &[f64], obstacles: &ObstacleSet, states: &[NodeState]) -> Option<Vec<f64>> {
    let n = states.len();
    let mut u = vec![0.0; n];
    for i in 0..n {
        match states[i] {
            NodeState::AtLower => u[i] = obstacles.lo(i),
            NodeState::AtUpper => u[i] = obstacles.hi(i),
            NodeState::Free => {}
        }
        if !u[i].is_finite() {
            return None;
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| states[i] == NodeState::Free).collect();
    if free.is_empty() {
        return Some(u);
    }
    let m = free.len();
    let sub = DMatrix::from_fn(m, m, |p, q| a[(free[p], free[q])]);
    let rhs = DVector::from_fn(m, |p, _| {
        let i = free[p];
        b[i] - (0..n).filter(|j| states[*j] != NodeState::Free).map(|j| a[(i, j)] * u[j]).sum::<f64>()
    });
    let sol = sub.lu().solve(&rhs)?;
    for (p, &i) in free.iter().enumerate() {
        u[i] = sol[p];
    }
    Some(u)
}
