//! Product-integration solver for `x + γ (l * x) = f`.
//!
//! The relaxation pair `(s_γ, r_γ)` solves `s + γ l*s = 1` and
//! `r + γ l*r = l`. `r` is carried through its primitive `R = 1*r`, which
//! solves `R + γ l*R = 1*l` and keeps `s = 1 - γR` exact on the grid.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernel::Kernel;

/// Real or complex scalar accepted by the solvers.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Mul<f64, Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn modulus(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Quadrature rule for the convolution term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Piecewise-constant unknown, enforced at the right node (first order).
    #[default]
    Rectangle,
    /// Piecewise-linear unknown (second order); uniform grids with a
    /// second primitive of the kernel.
    Trapezoid,
}

#[derive(Debug, Clone)]
enum Lags {
    /// Uniform grid: primitives at `k h`, `k = 0..=N`.
    Toeplitz {
        p1: Vec<f64>,
        p2: Option<Vec<f64>>,
    },
    /// Packed lower-triangular `W[n][m] = ∫_{t_n - t_m}^{t_n - t_{m-1}} l`.
    Dense { rect: Vec<f64> },
}

/// Discretised kernel on a [`TimeGrid`].
#[derive(Debug, Clone)]
pub struct ConvWeights {
    grid: TimeGrid,
    cells: Vec<f64>,
    node_prims: Vec<f64>,
    lags: Lags,
}

fn packed(n: usize, m: usize) -> usize {
    // row n (1-based) holds m = 1..=n
    n * (n - 1) / 2 + (m - 1)
}

/// Cell integrals and lag weights of the kernel `l` on `grid`.
pub fn kernel_weights(l: &Kernel, grid: &TimeGrid) -> Result<ConvWeights> {
    let cells = l.cell_integrals(grid)?;
    let nn = grid.cells();
    if grid.is_uniform() {
        let h = grid.step();
        let mut p1 = vec![0.0; nn + 1];
        for k in 1..=nn {
            p1[k] = p1[k - 1] + cells[k - 1];
        }
        let mut p2 = vec![0.0; nn + 1];
        for (k, v) in p2.iter_mut().enumerate().skip(1) {
            *v = l.primitive(k as f64 * h, 2)?;
        }
        Ok(ConvWeights {
            grid: grid.clone(),
            node_prims: p1.clone(),
            cells,
            lags: Lags::Toeplitz { p1, p2: Some(p2) },
        })
    } else {
        let t = grid.nodes();
        let mut rect = vec![0.0; nn * (nn + 1) / 2];
        let mut node_prims = vec![0.0; nn + 1];
        for n in 1..=nn {
            let mut acc = 0.0;
            for m in 1..=n {
                let w = l.integral(t[n] - t[m], t[n] - t[m - 1])?;
                rect[packed(n, m)] = w;
                acc += w;
            }
            node_prims[n] = acc;
        }
        Ok(ConvWeights {
            grid: grid.clone(),
            cells,
            node_prims,
            lags: Lags::Dense { rect },
        })
    }
}

impl ConvWeights {
    /// Uniform-grid weights from cell integrals, assuming constant density
    /// inside each cell.
    pub fn from_cells(grid: &TimeGrid, cells: Vec<f64>) -> Result<Self> {
        if !grid.is_uniform() {
            return Err(Error::Unsupported(
                "weights from cell integrals need a uniform grid".into(),
            ));
        }
        if cells.len() != grid.cells() {
            return Err(Error::param("cells", "length must equal the cell count"));
        }
        let h = grid.step();
        let nn = grid.cells();
        let mut p1 = vec![0.0; nn + 1];
        let mut p2 = vec![0.0; nn + 1];
        for k in 1..=nn {
            p1[k] = p1[k - 1] + cells[k - 1];
            p2[k] = p2[k - 1] + 0.5 * h * (p1[k - 1] + p1[k]);
        }
        Ok(ConvWeights {
            grid: grid.clone(),
            cells,
            node_prims: p1.clone(),
            lags: Lags::Toeplitz { p1, p2: Some(p2) },
        })
    }

    /// Uniform-grid weights from first and (optionally) second primitives
    /// at the nodes.
    pub fn from_primitives(grid: &TimeGrid, p1: Vec<f64>, p2: Option<Vec<f64>>) -> Result<Self> {
        if !grid.is_uniform() {
            return Err(Error::Unsupported(
                "weights from primitives need a uniform grid".into(),
            ));
        }
        let nn = grid.cells();
        if p1.len() != nn + 1 || p2.as_ref().is_some_and(|p| p.len() != nn + 1) {
            return Err(Error::param("primitives", "length must equal the node count"));
        }
        let cells = p1.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(ConvWeights {
            grid: grid.clone(),
            cells,
            node_prims: p1.clone(),
            lags: Lags::Toeplitz { p1, p2 },
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Cell integrals `w[n]`, `n = 1..=N` stored at index `n - 1`.
    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    /// `(1*l)(t_n)` for `n = 0..=N`.
    pub fn primitive_at_nodes(&self) -> &[f64] {
        &self.node_prims
    }

    /// Second primitive at the nodes, when available.
    pub fn second_primitive_at_nodes(&self) -> Option<&[f64]> {
        match &self.lags {
            Lags::Toeplitz { p2, .. } => p2.as_deref(),
            Lags::Dense { .. } => None,
        }
    }

    pub fn is_toeplitz(&self) -> bool {
        matches!(self.lags, Lags::Toeplitz { .. })
    }

    /// Cell averages `w[n] / (t_n - t_{n-1})`.
    pub fn averages(&self) -> Vec<f64> {
        (1..=self.grid.cells())
            .map(|n| self.cells[n - 1] / self.grid.width(n))
            .collect()
    }

    /// `W[n][m] = ∫_{cell m} l(t_n - ζ) dζ`, `1 <= m <= n`.
    pub fn rect(&self, n: usize, m: usize) -> f64 {
        match &self.lags {
            Lags::Toeplitz { p1, .. } => p1[n - m + 1] - p1[n - m],
            Lags::Dense { rect } => rect[packed(n, m)],
        }
    }

    /// Trapezoid weights by lag: `(right[k], left[k])` for `k = 0..N`.
    fn trapezoid_lags(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let (p1, p2) = match &self.lags {
            Lags::Toeplitz { p1, p2: Some(p2) } => (p1, p2),
            _ => {
                return Err(Error::Unsupported(
                    "trapezoid rule needs a uniform grid and a second primitive".into(),
                ))
            }
        };
        let h = self.grid.step();
        let nn = self.grid.cells();
        let mut right = vec![0.0; nn];
        let mut left = vec![0.0; nn];
        for k in 0..nn {
            let m0 = p1[k + 1] - p1[k];
            let i1 = (p1[k + 1] * h - (p2[k + 1] - p2[k])) / h;
            right[k] = m0 - i1;
            left[k] = i1;
        }
        Ok((right, left))
    }
}

fn check_pivot<T: Scalar>(d: T, step: usize) -> Result<()> {
    let m = d.modulus();
    if !(m >= 1e-14) {
        return Err(Error::Stability { step, modulus: m });
    }
    Ok(())
}

/// Solves `x_n + γ Σ_m W[n][m] x_m = f_n`, `n = 1..=N`, `x_0 = f_0`.
fn solve_rect<T: Scalar>(w: &ConvWeights, gamma: T, f: &[T]) -> Result<Vec<T>> {
    let nn = w.grid.cells();
    let mut x = vec![T::from_f64(0.0); nn + 1];
    x[0] = f[0];
    match &w.lags {
        Lags::Toeplitz { .. } => {
            let c = &w.cells;
            for n in 1..=nn {
                let mut acc = T::from_f64(0.0);
                for m in 1..n {
                    acc = acc + x[m] * c[n - m];
                }
                let d = T::from_f64(1.0) + gamma * c[0];
                check_pivot(d, n)?;
                x[n] = (f[n] - gamma * acc) / d;
            }
        }
        Lags::Dense { rect } => {
            for n in 1..=nn {
                let row = &rect[packed(n, 1)..packed(n, 1) + n];
                let mut acc = T::from_f64(0.0);
                for m in 1..n {
                    acc = acc + x[m] * row[m - 1];
                }
                let d = T::from_f64(1.0) + gamma * row[n - 1];
                check_pivot(d, n)?;
                x[n] = (f[n] - gamma * acc) / d;
            }
        }
    }
    Ok(x)
}

/// Trapezoid counterpart of [`solve_rect`]; `x_0 = f_0`.
fn solve_trap<T: Scalar>(w: &ConvWeights, gamma: T, f: &[T]) -> Result<Vec<T>> {
    let (right, left) = w.trapezoid_lags()?;
    let nn = w.grid.cells();
    let mut x = vec![T::from_f64(0.0); nn + 1];
    x[0] = f[0];
    let d = T::from_f64(1.0) + gamma * right[0];
    for n in 1..=nn {
        let mut acc = x[0] * left[n - 1];
        for j in 1..n {
            acc = acc + x[j] * (right[n - j] + left[n - j - 1]);
        }
        check_pivot(d, n)?;
        x[n] = (f[n] - gamma * acc) / d;
    }
    Ok(x)
}

/// Applies the discrete convolution operator: `(W x)_n` for `n = 0..=N`.
pub fn apply_kernel<T: Scalar>(w: &ConvWeights, x: &[T], rule: Rule) -> Result<Vec<T>> {
    let nn = w.grid.cells();
    let mut out = vec![T::from_f64(0.0); nn + 1];
    match rule {
        Rule::Rectangle => {
            for n in 1..=nn {
                let mut acc = T::from_f64(0.0);
                for m in 1..=n {
                    acc = acc + x[m] * w.rect(n, m);
                }
                out[n] = acc;
            }
        }
        Rule::Trapezoid => {
            let (right, left) = w.trapezoid_lags()?;
            for n in 1..=nn {
                let mut acc = x[0] * left[n - 1] + x[n] * right[0];
                for j in 1..n {
                    acc = acc + x[j] * (right[n - j] + left[n - j - 1]);
                }
                out[n] = acc;
            }
        }
    }
    Ok(out)
}

/// Solves `x + γ (l * x) = f` with `f` given at the nodes.
pub fn solve_direct<T: Scalar>(w: &ConvWeights, gamma: T, f: &[T], rule: Rule) -> Result<Vec<T>> {
    if f.len() != w.grid.cells() + 1 {
        return Err(Error::param("f", "must have one value per node"));
    }
    match rule {
        Rule::Rectangle => solve_rect(w, gamma, f),
        Rule::Trapezoid => solve_trap(w, gamma, f),
    }
}

/// Discrete `(s_γ, r_γ)`.
#[derive(Debug, Clone)]
pub struct RelaxationPair<T = Complex64> {
    pub gamma: T,
    pub rule: Rule,
    /// `s_γ(t_n)`, `n = 0..=N`.
    pub s: Vec<T>,
    /// Cell averages of `r_γ`, index `n - 1` for cell `n`.
    pub r: Vec<T>,
    /// `(1 * r_γ)(t_n)`, `n = 0..=N`.
    pub r_primitive: Vec<T>,
}

/// Relaxation pair with the default (rectangle) rule.
pub fn solve_relaxation<T: Scalar>(w: &ConvWeights, gamma: T) -> Result<RelaxationPair<T>> {
    solve_relaxation_with(w, gamma, Rule::Rectangle)
}

pub fn solve_relaxation_with<T: Scalar>(w: &ConvWeights, gamma: T, rule: Rule) -> Result<RelaxationPair<T>> {
    let ones = vec![T::from_f64(1.0); w.grid.cells() + 1];
    let s = solve_direct(w, gamma, &ones, rule)?;
    let lp: Vec<T> = w.node_prims.iter().map(|&v| T::from_f64(v)).collect();
    let big_r = solve_direct(w, gamma, &lp, rule)?;
    let r = (1..big_r.len())
        .map(|n| (big_r[n] - big_r[n - 1]) * (1.0 / w.grid.width(n)))
        .collect();
    if let Some(bad) = s.iter().chain(big_r.iter()).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("relaxation solve at node {bad}")));
    }
    Ok(RelaxationPair {
        gamma,
        rule,
        s,
        r,
        r_primitive: big_r,
    })
}

/// `v = f - γ (r_γ * f)` from the cell integrals of `r_γ`, which on a
/// uniform grid equals the direct rectangle solve of `v + γ l*v = f`.
/// Graded grids fall back to the direct solve.
pub fn resolve_volterra<T: Scalar>(w: &ConvWeights, gamma: T, f: &[T]) -> Result<Vec<T>> {
    if f.len() != w.grid.cells() + 1 {
        return Err(Error::param("f", "must have one value per node"));
    }
    if !w.is_toeplitz() {
        return solve_rect(w, gamma, f);
    }
    let pair = solve_relaxation_with(w, gamma, Rule::Rectangle)?;
    let rp = &pair.r_primitive;
    let nn = w.grid.cells();
    let q: Vec<T> = (1..=nn).map(|k| rp[k] - rp[k - 1]).collect();
    let mut v = vec![T::from_f64(0.0); nn + 1];
    v[0] = f[0];
    for n in 1..=nn {
        let mut acc = T::from_f64(0.0);
        for m in 1..=n {
            acc = acc + q[n - m] * f[m];
        }
        v[n] = f[n] - gamma * acc;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_kernel_weights() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let w = kernel_weights(&Kernel::constant(1.0), &g).unwrap();
        for c in w.cells() {
            assert!((c - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn gamma_zero_gives_trivial_pair() {
        let g = TimeGrid::graded(1.0, 16, 2.0).unwrap();
        let w = kernel_weights(&Kernel::g(0.5), &g).unwrap();
        let p = solve_relaxation(&w, 0.0f64).unwrap();
        assert!(p.s.iter().all(|&v| v == 1.0));
        for (r, avg) in p.r.iter().zip(w.averages()) {
            assert!((r - avg).abs() < 1e-12 * avg);
        }
    }

    #[test]
    fn singular_pivot_is_reported() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let w = kernel_weights(&Kernel::constant(1.0), &g).unwrap();
        let err = solve_relaxation(&w, -4.0f64).unwrap_err();
        assert!(matches!(err, Error::Stability { step: 1, .. }));
    }

    #[test]
    fn trapezoid_is_second_order_for_exponential() {
        let errs: Vec<f64> = [64usize, 128]
            .iter()
            .map(|&n| {
                let g = TimeGrid::uniform(1.0, n).unwrap();
                let w = kernel_weights(&Kernel::constant(1.0), &g).unwrap();
                let p = solve_relaxation_with(&w, 1.0f64, Rule::Trapezoid).unwrap();
                g.nodes()
                    .iter()
                    .zip(&p.s)
                    .map(|(t, s)| (s - (-t).exp()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }
}
