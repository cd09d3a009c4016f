use crate::error::{domain, usage, Result};

/// Largest interior node count accepted; the nonlocal matrices are dense.
pub const MAX_NODES: usize = 2048;

/// Uniform mesh of an interval with `n` interior nodes and spacing `h = (x_hi - x_lo) / (n + 1)`.
///
/// Nodes are numbered `0..=n+1`; the P1 hat of interior node `k` has dof index `k - 1`.
/// Element `e` is `[node(e), node(e + 1)]` for `e in 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh {
    x_lo: f64,
    x_hi: f64,
    n: usize,
    h: f64,
}

impl Mesh {
    pub fn new(x_lo: f64, x_hi: f64, n: usize) -> Result<Self> {
        if !(x_lo.is_finite() && x_hi.is_finite()) || x_lo >= x_hi {
            return domain(format!("mesh needs finite x_lo < x_hi, got [{x_lo}, {x_hi}]"));
        }
        if n == 0 || n > MAX_NODES {
            return domain(format!("interior node count must lie in 1..={MAX_NODES}, got {n}"));
        }
        Ok(Self { x_lo, x_hi, n, h: (x_hi - x_lo) / (n + 1) as f64 })
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn x_hi(&self) -> f64 {
        self.x_hi
    }

    /// Number of interior nodes (degrees of freedom).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn length(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    pub fn num_elements(&self) -> usize {
        self.n + 1
    }

    /// Coordinate of node `k` in `0..=n+1`.
    pub fn node(&self, k: usize) -> f64 {
        if k == self.n + 1 {
            self.x_hi
        } else {
            self.x_lo + k as f64 * self.h
        }
    }

    /// Coordinate of dof `i` (interior node `i + 1`).
    pub fn dof_x(&self, i: usize) -> f64 {
        self.node(i + 1)
    }

    pub fn interior_nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.dof_x(i)).collect()
    }

    pub fn element(&self, e: usize) -> (f64, f64) {
        (self.node(e), self.node(e + 1))
    }

    /// Dof indices of the hats living on element `e`, paired with their slope on it.
    pub fn element_dofs(&self, e: usize) -> ElementDofs {
        let left = if e >= 1 { Some(e - 1) } else { None };
        let right = if e < self.n { Some(e) } else { None };
        ElementDofs { left, right, a: self.node(e), h: self.h }
    }

    /// Element containing `x`, if `x` lies in the closed domain.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if x < self.x_lo || x > self.x_hi {
            return None;
        }
        let e = ((x - self.x_lo) / self.h).floor() as usize;
        Some(e.min(self.n))
    }

    /// Nodal interpolation of `f` at the interior nodes.
    pub fn interpolate<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.n).map(|i| f(self.dof_x(i))).collect()
    }

    pub fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.n {
            return usage(format!("{what} has length {len}, mesh has {} interior nodes", self.n));
        }
        Ok(())
    }
}

/// The (at most two) hats supported on one element.
#[derive(Debug, Clone, Copy)]
pub struct ElementDofs {
    /// Hat of the left node: decreases from 1 to 0 across the element.
    pub left: Option<usize>,
    /// Hat of the right node: increases from 0 to 1.
    pub right: Option<usize>,
    a: f64,
    h: f64,
}

impl ElementDofs {
    /// `(dof, value at x, slope)` for each hat present.
    pub fn eval(&self, x: f64) -> impl Iterator<Item = (usize, f64, f64)> {
        let t = (x - self.a) / self.h;
        let inv = 1.0 / self.h;
        self.left
            .map(|d| (d, 1.0 - t, -inv))
            .into_iter()
            .chain(self.right.map(|d| (d, t, inv)))
    }

    pub fn dofs(&self) -> impl Iterator<Item = usize> {
        self.left.into_iter().chain(self.right)
    }
}
