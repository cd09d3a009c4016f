//! N ordered membranes `u_1 ≥ u_2 ≥ … ≥ u_N`, each loaded by its own `b^i`.

use nalgebra::{DMatrix, DVector};

use crate::discretization::DiscreteSystem;
use crate::error::{domain, usage, Error, Result};
use crate::fractional::PenaltyFunction;

use super::penalty::{solve_semilinear, NewtonOptions, Term};

#[derive(Debug, Clone, PartialEq)]
pub enum MembraneMethod {
    /// Nodal-block projected SOR: each node's column `(u_1, …, u_N)` is relaxed and projected
    /// onto the ordered cone.
    Gs { omega: f64, tol: f64, max_sweeps: usize },
    /// Bounded penalization with the weights of [`membrane_weights`]; the ordering is only
    /// approximate (`u_i ≥ u_{i+1} - ε`) and needs a saturating `θ`.
    Penalized { theta: PenaltyFunction, epsilon: f64, newton: NewtonOptions },
}

impl Default for MembraneMethod {
    fn default() -> Self {
        Self::Gs { omega: 1.5, tol: 1e-10, max_sweeps: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembraneResult {
    /// `u[i]` is membrane `i`.
    pub u: Vec<Vec<f64>>,
    /// `A u_i - b^i`.
    pub residuals: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
}

/// Nodal penalty densities `ζ_0 = max_i (f^1+…+f^i)/i`, `ζ_i = i ζ_0 - (f^1+…+f^i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MembraneWeights {
    pub zeta0: Vec<f64>,
    /// `zeta[i - 1]` is `ζ_i`, `i = 1..=N`.
    pub zeta: Vec<Vec<f64>>,
}

/// Weights from load densities `f^i` (nodal).
pub fn membrane_weights(f: &[Vec<f64>]) -> MembraneWeights {
    let n = f.first().map_or(0, Vec::len);
    let nm = f.len();
    let mut zeta0 = vec![f64::NEG_INFINITY; n];
    for k in 0..n {
        let mut partial = 0.0;
        for (i, fi) in f.iter().enumerate() {
            partial += fi[k];
            zeta0[k] = zeta0[k].max(partial / (i + 1) as f64);
        }
    }
    let zeta = (1..=nm)
        .map(|i| (0..n).map(|k| i as f64 * zeta0[k] - f[..i].iter().map(|fj| fj[k]).sum::<f64>()).collect())
        .collect();
    MembraneWeights { zeta0, zeta }
}

fn check_loads(system: &DiscreteSystem, loads: &[Vec<f64>]) -> Result<()> {
    if loads.len() < 2 {
        return usage(format!("the membranes problem needs N >= 2 loads, got {}", loads.len()));
    }
    for l in loads {
        system.mesh.check_len("membrane load", l.len())?;
    }
    Ok(())
}

pub fn solve_n_membranes(system: &DiscreteSystem, loads: &[Vec<f64>], method: &MembraneMethod) -> Result<MembraneResult> {
    check_loads(system, loads)?;
    match method {
        MembraneMethod::Gs { omega, tol, max_sweeps } => nodal_psor(system, loads, *omega, *tol, *max_sweeps),
        MembraneMethod::Penalized { theta, epsilon, newton } => penalized(system, loads, *theta, *epsilon, newton),
    }
}

fn finish(system: &DiscreteSystem, loads: &[Vec<f64>], u: Vec<Vec<f64>>, iterations: usize, converged: bool, history: Vec<f64>) -> MembraneResult {
    let residuals = u.iter().zip(loads).map(|(ui, bi)| {
        system.apply(ui).iter().zip(bi).map(|(a, b)| a - b).collect()
    }).collect();
    MembraneResult { u, residuals, iterations, converged, history }
}

fn nodal_psor(system: &DiscreteSystem, loads: &[Vec<f64>], omega: f64, tol: f64, max_sweeps: usize) -> Result<MembraneResult> {
    if !(omega > 0.0 && omega < 2.0) {
        return domain(format!("omega must lie in (0,2), got {omega}"));
    }
    let n = system.n();
    let nm = loads.len();
    let a = &system.stiffness;
    let rows: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).iter().copied().collect()).collect();
    let mut u = vec![vec![0.0; n]; nm];
    let mut history = Vec::new();
    let mut target = vec![0.0; nm];
    for sweep in 1..=max_sweeps {
        let mut change = 0.0f64;
        for k in 0..n {
            let akk = rows[k][k];
            for m in 0..nm {
                let r = loads[m][k] - rows[k].iter().zip(&u[m]).map(|(x, y)| x * y).sum::<f64>();
                target[m] = u[m][k] + omega * r / akk;
            }
            let projected = isotonic_decreasing(&target);
            for m in 0..nm {
                change = change.max((projected[m] - u[m][k]).abs());
                u[m][k] = projected[m];
            }
        }
        history.push(change);
        if change <= tol {
            return Ok(finish(system, loads, u, sweep, true, history));
        }
        if !change.is_finite() {
            return Err(Error::NumericalFailure("membrane sweep diverged".into()));
        }
    }
    Ok(finish(system, loads, u, max_sweeps, false, history))
}

/// Euclidean projection onto `{v_1 ≥ v_2 ≥ … ≥ v_N}` (pool adjacent violators).
pub(crate) fn isotonic_decreasing(t: &[f64]) -> Vec<f64> {
    // blocks of (mean, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(t.len());
    for &v in t {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, c2) = blocks[blocks.len() - 1];
            let (m1, c1) = blocks[blocks.len() - 2];
            if m1 >= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            blocks.push(((m1 * c1 as f64 + m2 * c2 as f64) / (c1 + c2) as f64, c1 + c2));
        }
    }
    blocks.into_iter().flat_map(|(m, c)| std::iter::repeat_n(m, c)).collect()
}

fn penalized(system: &DiscreteSystem, loads: &[Vec<f64>], theta: PenaltyFunction, eps: f64, opts: &NewtonOptions) -> Result<MembraneResult> {
    if !(eps.is_finite() && eps > 0.0) {
        return domain(format!("epsilon must be positive, got {eps}"));
    }
    let n = system.n();
    let nm = loads.len();
    let m = &system.mass_lumped;
    let f: Vec<Vec<f64>> = loads.iter().map(|b| b.iter().zip(m).map(|(b, m)| b / m).collect()).collect();
    let w = membrane_weights(&f);
    // Stacked unknown U = (u_1, …, u_N); block-diagonal A.
    let size = n * nm;
    let mut big = DMatrix::zeros(size, size);
    for blk in 0..nm {
        big.view_mut((blk * n, blk * n), (n, n)).copy_from(&system.stiffness);
    }
    // Row i of membrane p: A u_p + m ζ_p θ(u_p - u_{p+1}) - m ζ_{p-1} θ(u_{p-1} - u_p)
    //   = b^p + m ζ_p - m ζ_{p-1}, with θ(u_0 - u_1) = θ(u_N - u_{N+1}) = 1.
    // The coupling terms involve two unknowns, so Newton runs on a local residual below.
    let mut rhs = vec![0.0; size];
    for p in 0..nm {
        for k in 0..n {
            let zp = w.zeta[p][k];
            let zprev = if p == 0 { w.zeta0[k] } else { w.zeta[p - 1][k] };
            // The boundary terms cancel against their own right-hand-side parts.
            let lhs_const = if p == nm - 1 { m[k] * zp } else { 0.0 } - if p == 0 { m[k] * zprev } else { 0.0 };
            rhs[p * n + k] = loads[p][k] + m[k] * zp - m[k] * zprev - lhs_const;
        }
    }
    let theta_e = |t: f64| theta.value(t / eps);
    let dtheta = |t: f64| theta.derivative(t / eps) / eps;
    let residual = |u: &[f64]| -> Vec<f64> {
        let mut g: Vec<f64> = (0..size).map(|r| (0..size).map(|c| big[(r, c)] * u[c]).sum::<f64>() - rhs[r]).collect();
        for p in 0..nm - 1 {
            for k in 0..n {
                let t = u[p * n + k] - u[(p + 1) * n + k];
                let v = m[k] * w.zeta[p][k] * theta_e(t);
                g[p * n + k] += v;
                g[(p + 1) * n + k] -= v;
            }
        }
        g
    };
    let jacobian = |u: &[f64]| -> DMatrix<f64> {
        let mut j = big.clone();
        for p in 0..nm - 1 {
            for k in 0..n {
                let (r1, r2) = (p * n + k, (p + 1) * n + k);
                let d = m[k] * w.zeta[p][k] * dtheta(u[r1] - u[r2]);
                j[(r1, r1)] += d;
                j[(r1, r2)] -= d;
                j[(r2, r1)] -= d;
                j[(r2, r2)] += d;
            }
        }
        j
    };
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut u = vec![0.0; size];
    let mut g = residual(&u);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    for it in 1..=opts.max_iter {
        iters = it;
        let Some(delta) = jacobian(&u).lu().solve(&DVector::from_iterator(size, g.iter().map(|v| -v))) else { break };
        let g0 = norm(&g);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = u.iter().zip(delta.iter()).map(|(x, d)| x + step * d).collect();
            let gt = residual(&trial);
            if norm(&gt) < g0 {
                u = trial;
                g = gt;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        let update = step * norm(delta.as_slice());
        history.push(update);
        if !accepted {
            converged = g0 <= 1e-13 * (1.0 + norm(&rhs));
            break;
        }
        if update <= opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        // Fall back on a block-diagonal semilinear sweep: each membrane with its neighbours frozen.
        log::debug!("membrane Newton stalled; running membrane-wise relaxation");
        let mut stacked: Vec<Vec<f64>> = (0..nm).map(|p| u[p * n..(p + 1) * n].to_vec()).collect();
        for sweep in 1..=10_000 {
            let mut change = 0.0f64;
            for p in 0..nm {
                let mut terms = Vec::new();
                if p + 1 < nm {
                    terms.push(Term { weight: (0..n).map(|k| m[k] * w.zeta[p][k]).collect(), target: stacked[p + 1].clone(), dir: 1.0, sign: 1.0, lower_variant: false });
                }
                if p > 0 {
                    terms.push(Term { weight: (0..n).map(|k| m[k] * w.zeta[p - 1][k]).collect(), target: stacked[p - 1].clone(), dir: -1.0, sign: -1.0, lower_variant: false });
                }
                let r = rhs[p * n..(p + 1) * n].to_vec();
                let (new, _, _, _) = solve_semilinear(&system.stiffness, &r, &terms, theta, eps, opts, stacked[p].clone());
                change = stacked[p].iter().zip(&new).fold(change, |c, (a, b)| c.max((a - b).abs()));
                stacked[p] = new;
            }
            history.push(change);
            iters += 1;
            if change <= opts.tol {
                converged = true;
                let _ = sweep;
                break;
            }
        }
        u = stacked.concat();
    }
    let out: Vec<Vec<f64>> = (0..nm).map(|p| u[p * n..(p + 1) * n].to_vec()).collect();
    if out.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("penalized membranes produced non-finite values".into()));
    }
    Ok(finish(system, loads, out, iters, converged, history))
}

/// Exact solution by enumerating contact patterns `(membrane pair, node)`; KKT system
/// `A u_i - b^i = μ_i - μ_{i-1}`, `μ ≥ 0`, `μ (u_i - u_{i+1}) = 0`.
pub fn membranes_oracle(system: &DiscreteSystem, loads: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_loads(system, loads)?;
    let n = system.n();
    let nm = loads.len();
    let pairs = (nm - 1) * n;
    if pairs > 16 {
        return usage(format!("membrane oracle needs (N-1) n <= 16, got {pairs}"));
    }
    let a = &system.stiffness;
    let scale = loads.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    for pattern in 0u32..(1u32 << pairs) {
        let contacts: Vec<(usize, usize)> = (0..pairs)
            .filter(|bit| pattern >> bit & 1 == 1)
            .map(|bit| (bit / n, bit % n))
            .collect();
        let size = nm * n + contacts.len();
        let mut mat = DMatrix::zeros(size, size);
        let mut rhs = DVector::zeros(size);
        for p in 0..nm {
            mat.view_mut((p * n, p * n), (n, n)).copy_from(a);
            for k in 0..n {
                rhs[p * n + k] = loads[p][k];
            }
        }
        for (c, &(p, k)) in contacts.iter().enumerate() {
            let col = nm * n + c;
            // μ_{p,k} enters membrane p with sign -1 and membrane p+1 with +1.
            mat[(p * n + k, col)] = -1.0;
            mat[((p + 1) * n + k, col)] = 1.0;
            mat[(col, p * n + k)] = 1.0;
            mat[(col, (p + 1) * n + k)] = -1.0;
        }
        let Some(sol) = mat.lu().solve(&rhs) else { continue };
        let tol = 1e-10 * scale.max(sol.amax());
        let ordered = (0..nm - 1).all(|p| (0..n).all(|k| sol[p * n + k] - sol[(p + 1) * n + k] >= -tol));
        let signs = (0..contacts.len()).all(|c| sol[nm * n + c] >= -tol);
        if ordered && signs {
            return Ok((0..nm).map(|p| sol.rows(p * n, n).iter().copied().collect()).collect());
        }
    }
    Err(Error::Infeasible("no contact pattern satisfies the membrane KKT conditions".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotonic_projection_pools_violators() {
        assert_eq!(isotonic_decreasing(&[3.0, 2.0, 1.0]), vec![3.0, 2.0, 1.0]);
        assert_eq!(isotonic_decreasing(&[0.0, 1.0]), vec![0.5, 0.5]);
        assert_eq!(isotonic_decreasing(&[1.0, 0.0, 2.0]), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn weights_for_two_membranes() {
        let w = membrane_weights(&[vec![1.0], vec![0.0]]);
        assert_eq!(w.zeta0, vec![1.0]);
        assert_eq!(w.zeta, vec![vec![0.0], vec![1.0]]);
    }
}
