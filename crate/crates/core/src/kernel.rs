//! Creep-function pairs `(a0, a1, b)` with `a0 b + a1 * b = 1`.
//!
//! Kernels are described by [`Kernel`], which gives access to primitives of
//! every order and to cell integrals. Singular kernels such as
//! `g_mu(t) = t^(mu-1) / Gamma(mu)` are never sampled at `t = 0`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::quad::{gauss_legendre8, tanh_sinh};

/// Gamma function, exact at small positive integers.
pub fn gamma_fn(x: f64) -> f64 {
    if x.fract() == 0.0 && (1.0..=21.0).contains(&x) {
        (1..x as u64).map(|k| k as f64).product()
    } else {
        gamma(x)
    }
}

type PointFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Tabulated kernel given by cell integrals; constant density inside cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledKernel {
    edges: Vec<f64>,
    // primitives of order 1..=3 at the edges
    prims: [Vec<f64>; 3],
    cells: Vec<f64>,
}

impl SampledKernel {
    /// `edges` has one more entry than `cells`; `edges[0]` must be 0.
    pub fn new(edges: Vec<f64>, cells: Vec<f64>) -> Result<Self> {
        if edges.len() != cells.len() + 1 || cells.is_empty() {
            return Err(Error::param(
                "samples",
                "need at least one cell and one more edge than cells",
            ));
        }
        if edges[0] != 0.0 {
            return Err(Error::param("samples", "first cell must start at t = 0"));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("samples", "cell edges must increase strictly"));
        }
        if cells.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("samples", "cell integrals must be finite"));
        }
        let m = cells.len();
        let mut prims = [vec![0.0; m + 1], vec![0.0; m + 1], vec![0.0; m + 1]];
        for i in 0..m {
            let w = edges[i + 1] - edges[i];
            let d = cells[i] / w;
            let p1 = prims[0][i];
            let p2 = prims[1][i];
            let p3 = prims[2][i];
            prims[0][i + 1] = p1 + d * w;
            prims[1][i + 1] = p2 + p1 * w + d * w * w / 2.0;
            prims[2][i + 1] = p3 + p2 * w + p1 * w * w / 2.0 + d * w * w * w / 6.0;
        }
        Ok(SampledKernel {
            edges,
            prims,
            cells,
        })
    }

    /// Builds from rows `(cell left edge, cell integral)`. The right edge of
    /// the last cell repeats the width of the one before it.
    pub fn from_rows(rows: &[(f64, f64)]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::param("samples", "need at least two rows"));
        }
        let mut edges: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let n = edges.len();
        let last = edges[n - 1] + (edges[n - 1] - edges[n - 2]);
        edges.push(last);
        Self::new(edges, rows.iter().map(|r| r.1).collect())
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn support_end(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    fn locate(&self, t: f64) -> Result<usize> {
        let end = self.support_end();
        if t > end * (1.0 + 1e-12) {
            return Err(Error::Range(format!(
                "sampled kernel covers [0, {end}], evaluated at {t}"
            )));
        }
        let i = self.edges.partition_point(|&e| e <= t);
        Ok(i.saturating_sub(1).min(self.cells.len() - 1))
    }

    fn primitive(&self, t: f64, order: usize) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        let i = self.locate(t)?;
        let x = t - self.edges[i];
        let d = self.cells[i] / (self.edges[i + 1] - self.edges[i]);
        let p = |k: usize| self.prims[k - 1][i];
        Ok(match order {
            1 => p(1) + d * x,
            2 => p(2) + p(1) * x + d * x * x / 2.0,
            3 => p(3) + p(2) * x + p(1) * x * x / 2.0 + d * x * x * x / 6.0,
            _ => {
                return Err(Error::Unsupported(format!(
                    "primitive of order {order} of a sampled kernel"
                )))
            }
        })
    }

    fn average(&self, t: f64) -> Result<f64> {
        let i = self.locate(t)?;
        Ok(self.cells[i] / (self.edges[i + 1] - self.edges[i]))
    }
}

/// Kernel given by point values, integrated numerically.
#[derive(Clone)]
pub struct FunctionKernel {
    label: String,
    f: PointFn,
}

impl FunctionKernel {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        FunctionKernel {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }
}

impl fmt::Debug for FunctionKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FunctionKernel({})", self.label)
    }
}

/// Tolerance for numerically integrated cells.
pub const CELL_TOL: f64 = 1e-10;

/// A scalar kernel on `(0, inf)`.
#[derive(Debug, Clone)]
pub enum Kernel {
    Zero,
    /// `scale * g_mu`.
    Power { mu: f64, scale: f64 },
    Sampled(SampledKernel),
    Function(FunctionKernel),
}

impl Kernel {
    pub fn constant(c: f64) -> Self {
        Kernel::Power { mu: 1.0, scale: c }
    }

    pub fn g(mu: f64) -> Self {
        Kernel::Power { mu, scale: 1.0 }
    }

    /// Point value; `None` for tabulated kernels.
    pub fn value(&self, t: f64) -> Option<f64> {
        match self {
            Kernel::Zero => Some(0.0),
            Kernel::Power { mu, scale } => {
                if t <= 0.0 {
                    if *mu == 1.0 {
                        Some(*scale)
                    } else if *mu > 1.0 {
                        Some(0.0)
                    } else {
                        Some(f64::INFINITY)
                    }
                } else {
                    Some(scale * t.powf(mu - 1.0) / gamma_fn(*mu))
                }
            }
            Kernel::Sampled(_) => None,
            Kernel::Function(f) => Some(f.eval(t)),
        }
    }

    /// Point value or, for tabulated kernels, the average over the cell
    /// containing `t`.
    pub fn value_or_average(&self, t: f64) -> Result<f64> {
        match self {
            Kernel::Sampled(s) => s.average(t),
            _ => Ok(self.value(t).unwrap()),
        }
    }

    pub fn has_point_values(&self) -> bool {
        !matches!(self, Kernel::Sampled(_))
    }

    /// Iterated primitive `(1^{*order} * l)(t)`, `order >= 1`.
    pub fn primitive(&self, t: f64, order: usize) -> Result<f64> {
        if order == 0 {
            return Err(Error::param("order", "primitive order must be >= 1"));
        }
        if t <= 0.0 {
            return Ok(0.0);
        }
        match self {
            Kernel::Zero => Ok(0.0),
            Kernel::Power { mu, scale } => {
                let nu = mu + order as f64;
                Ok(scale * t.powf(nu - 1.0) / gamma_fn(nu))
            }
            Kernel::Sampled(s) => s.primitive(t, order),
            Kernel::Function(f) => {
                let fact = gamma_fn(order as f64);
                let p = order as i32 - 1;
                let q = tanh_sinh(
                    |x, _, dr| {
                        let y = f.eval(x);
                        if p == 0 {
                            y
                        } else {
                            y * dr.powi(p) / fact
                        }
                    },
                    0.0,
                    t,
                    CELL_TOL,
                );
                if !q.converged {
                    return Err(Error::Accuracy {
                        cell: 0,
                        estimate: q.error,
                    });
                }
                Ok(q.value)
            }
        }
    }

    /// `∫_a^b l`.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        match self {
            Kernel::Function(f) => {
                let q = tanh_sinh(|x, _, _| f.eval(x), a, b, CELL_TOL);
                if !q.converged {
                    return Err(Error::Accuracy {
                        cell: 0,
                        estimate: q.error,
                    });
                }
                Ok(q.value)
            }
            _ => Ok(self.primitive(b, 1)? - self.primitive(a, 1)?),
        }
    }

    /// Cell integrals `∫_{t_{n-1}}^{t_n} l` for `n = 1..=N`.
    pub fn cell_integrals(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        let t = grid.nodes();
        let mut out = Vec::with_capacity(grid.cells());
        for n in 1..t.len() {
            let v = self.integral(t[n - 1], t[n]).map_err(|e| match e {
                Error::Accuracy { estimate, .. } => Error::Accuracy { cell: n, estimate },
                other => other,
            })?;
            out.push(v);
        }
        Ok(out)
    }

    /// Laplace transform where a closed form exists.
    pub fn laplace(&self, lambda: Complex64) -> Option<Complex64> {
        match self {
            Kernel::Zero => Some(Complex64::new(0.0, 0.0)),
            Kernel::Power { mu, scale } => Some(lambda.powf(-mu) * *scale),
            _ => None,
        }
    }

    /// Whether the kernel is known to be nonincreasing.
    pub fn is_nonincreasing(&self) -> Option<bool> {
        match self {
            Kernel::Zero => Some(true),
            Kernel::Power { mu, scale } => Some(*mu <= 1.0 || *scale == 0.0),
            Kernel::Sampled(s) => {
                let dens: Vec<f64> = s
                    .cells
                    .iter()
                    .zip(s.edges.windows(2))
                    .map(|(c, e)| c / (e[1] - e[0]))
                    .collect();
                Some(dens.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)))
            }
            Kernel::Function(_) => None,
        }
    }

    /// Nonnegativity on the cells of `grid` (via cell integrals).
    pub fn is_nonnegative_on(&self, grid: &TimeGrid) -> Result<bool> {
        Ok(self.cell_integrals(grid)?.iter().all(|&c| c >= 0.0))
    }

    /// `lim_{t -> inf} l(t)` when known.
    pub fn limit_at_infinity(&self) -> Option<f64> {
        match self {
            Kernel::Zero => Some(0.0),
            Kernel::Power { mu, scale } => {
                if *mu < 1.0 {
                    Some(0.0)
                } else if *mu == 1.0 {
                    Some(*scale)
                } else {
                    Some(f64::INFINITY)
                }
            }
            _ => None,
        }
    }
}

/// Family tag of a [`CreepKernel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    Heaviside,
    FractionalRl { alpha: f64 },
    Custom,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::Heaviside => write!(f, "heaviside"),
            KernelFamily::FractionalRl { alpha } => write!(f, "fractional_rl(alpha={alpha})"),
            KernelFamily::Custom => write!(f, "custom"),
        }
    }
}

/// A creep pair: `a0 b(t) + (a1 * b)(t) = 1`.
#[derive(Debug, Clone)]
pub struct CreepKernel {
    pub a0: f64,
    pub a1: Kernel,
    pub b: Kernel,
    pub family: KernelFamily,
}

/// Builds a built-in kernel: `Heaviside` takes no parameters, `FractionalRl`
/// takes `[alpha]` with `alpha` in `(0, 1)`.
pub fn make_kernel(family: KernelFamily, params: &[f64]) -> Result<CreepKernel> {
    match family {
        KernelFamily::Heaviside => {
            if !params.is_empty() {
                return Err(Error::param("params", "heaviside takes no parameters"));
            }
            Ok(CreepKernel {
                a0: 1.0,
                a1: Kernel::Zero,
                b: Kernel::constant(1.0),
                family,
            })
        }
        KernelFamily::FractionalRl { alpha } => {
            let alpha = match params {
                [] => alpha,
                [a] => *a,
                _ => return Err(Error::param("params", "fractional_rl takes [alpha]")),
            };
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::param("alpha", format!("must lie in (0, 1), got {alpha}")));
            }
            Ok(CreepKernel {
                a0: 0.0,
                a1: Kernel::g(1.0 - alpha),
                b: Kernel::g(alpha),
                family: KernelFamily::FractionalRl { alpha },
            })
        }
        KernelFamily::Custom => Err(Error::Unsupported(
            "custom kernels are built with CreepKernel::custom".into(),
        )),
    }
}

impl CreepKernel {
    pub fn heaviside() -> Self {
        make_kernel(KernelFamily::Heaviside, &[]).unwrap()
    }

    pub fn fractional(alpha: f64) -> Result<Self> {
        make_kernel(KernelFamily::FractionalRl { alpha }, &[alpha])
    }

    pub fn custom(a0: f64, a1: Kernel, b: Kernel) -> Result<Self> {
        if !(a0.is_finite() && a0 >= 0.0) {
            return Err(Error::param("a0", format!("must be nonnegative, got {a0}")));
        }
        if a1.is_nonincreasing() == Some(false) {
            return Err(Error::param("a1", "must be nonincreasing"));
        }
        Ok(CreepKernel {
            a0,
            a1,
            b,
            family: KernelFamily::Custom,
        })
    }

    /// Closed-form `b̂(λ)` for built-in families.
    pub fn laplace_b(&self, lambda: Complex64) -> Option<Complex64> {
        match self.family {
            KernelFamily::Heaviside => Some(lambda.inv()),
            KernelFamily::FractionalRl { alpha } => Some(lambda.powf(-alpha)),
            KernelFamily::Custom => None,
        }
    }

    pub fn has_laplace(&self) -> bool {
        !matches!(self.family, KernelFamily::Custom)
    }

    /// `(k0, k_inf)`: the atom of the partner kernel and the limit of its
    /// density, known for built-ins.
    pub fn k0_kinf(&self) -> Option<(f64, f64)> {
        match self.family {
            KernelFamily::Custom => None,
            _ => Some((self.a0, self.a1.limit_at_infinity()?)),
        }
    }
}

/// Discretisation of `(a1 * b)(t_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvRule {
    /// Per-cell quadrature of point values; double-exponential on cells that
    /// touch a singular end, Gauss-Legendre elsewhere.
    CellQuadrature,
    /// Cell averages of `b` against exact primitives of `a1`.
    ProductRectangle,
    /// `b` linear between nodes (constant on the first cell) against exact
    /// moments of `a1`.
    ProductTrapezoid,
}

/// `(a1 * b)(t_n)` for `n = 0..=N`.
pub fn convolve_at_nodes(a1: &Kernel, b: &Kernel, grid: &TimeGrid, rule: ConvRule) -> Result<Vec<f64>> {
    let t = grid.nodes();
    let nn = grid.cells();
    let mut out = vec![0.0; nn + 1];
    if matches!(a1, Kernel::Zero) || matches!(b, Kernel::Zero) {
        return Ok(out);
    }
    match rule {
        ConvRule::CellQuadrature => {
            let (fa, fb) = match (a1.has_point_values(), b.has_point_values()) {
                (true, true) => (a1, b),
                _ => {
                    return Err(Error::Unsupported(
                        "cell quadrature needs point values of both kernels".into(),
                    ))
                }
            };
            for n in 1..=nn {
                let mut sum = 0.0;
                for m in 1..=n {
                    let (lo, hi) = (t[m - 1], t[m]);
                    let gap = t[n] - hi;
                    let near_singular = m == 1 || m == n || m + 1 == n || m == 2;
                    let v = if near_singular {
                        let q = tanh_sinh(
                            |x, dl, dr| {
                                let zeta = if m == 1 { dl } else { x };
                                let y = fa.value(gap + dr).unwrap() * fb.value(zeta).unwrap();
                                if y.is_finite() {
                                    y
                                } else {
                                    0.0
                                }
                            },
                            lo,
                            hi,
                            1e-14,
                        );
                        if !q.converged && q.error > 1e-12 {
                            return Err(Error::Accuracy {
                                cell: m,
                                estimate: q.error,
                            });
                        }
                        q.value
                    } else {
                        gauss_legendre8(
                            |x| fa.value(t[n] - x).unwrap() * fb.value(x).unwrap(),
                            lo,
                            hi,
                        )
                    };
                    sum += v;
                }
                out[n] = sum;
            }
        }
        ConvRule::ProductRectangle => {
            let bc = b.cell_integrals(grid)?;
            for n in 1..=nn {
                let mut sum = 0.0;
                for m in 1..=n {
                    let w = a1.integral(t[n] - t[m], t[n] - t[m - 1])?;
                    sum += bc[m - 1] / grid.width(m) * w;
                }
                out[n] = sum;
            }
        }
        ConvRule::ProductTrapezoid => {
            if !b.has_point_values() {
                return Err(Error::Unsupported(
                    "trapezoid rule needs point values of b".into(),
                ));
            }
            let bc = b.cell_integrals(grid)?;
            for n in 1..=nn {
                let mut sum = 0.0;
                for m in 1..=n {
                    let (lo, hi) = (t[m - 1], t[m]);
                    let h = hi - lo;
                    // ∫_{lo}^{hi} a1(t_n - ζ) dζ and ∫ a1(t_n - ζ)(ζ - lo) dζ
                    let (u0, u1) = (t[n] - hi, t[n] - lo);
                    let m0 = a1.primitive(u1, 1)? - a1.primitive(u0, 1)?;
                    let m1 = m0 * (t[n] - lo) - (u1 * a1.primitive(u1, 1)?
                        - u0 * a1.primitive(u0, 1)?
                        - (a1.primitive(u1, 2)? - a1.primitive(u0, 2)?));
                    if m == 1 {
                        sum += bc[0] / h * m0;
                    } else {
                        let (bl, br) = (b.value(lo).unwrap(), b.value(hi).unwrap());
                        sum += bl * m0 + (br - bl) / h * m1;
                    }
                }
                out[n] = sum;
            }
        }
    }
    Ok(out)
}

/// Outcome of [`verify_pc_star`].
#[derive(Debug, Clone, Serialize)]
pub struct PcStarReport {
    pub max_residual: f64,
    pub worst_node: usize,
    pub residuals: Vec<f64>,
    pub tol: f64,
    pub rule: ConvRule,
    pub pass: bool,
}

/// Default tolerance: tight for built-ins, loose for tabulated customs.
pub fn default_pc_star_tol(k: &CreepKernel) -> f64 {
    match k.family {
        KernelFamily::Custom => 1e-3,
        _ => 1e-6,
    }
}

/// Checks `a0 b(t_n) + (a1 * b)(t_n) = 1` on the nodes `t_1..t_N`.
pub fn verify_pc_star(k: &CreepKernel, grid: &TimeGrid, tol: Option<f64>) -> Result<PcStarReport> {
    let rule = if k.a1.has_point_values() && k.b.has_point_values() {
        ConvRule::CellQuadrature
    } else {
        ConvRule::ProductRectangle
    };
    verify_pc_star_with(k, grid, tol, rule)
}

pub fn verify_pc_star_with(
    k: &CreepKernel,
    grid: &TimeGrid,
    tol: Option<f64>,
    rule: ConvRule,
) -> Result<PcStarReport> {
    let tol = tol.unwrap_or_else(|| default_pc_star_tol(k));
    let conv = convolve_at_nodes(&k.a1, &k.b, grid, rule)?;
    let t = grid.nodes();
    let mut residuals = vec![0.0; t.len()];
    for n in 1..t.len() {
        let bv = if k.a0 == 0.0 {
            0.0
        } else {
            match &k.b {
                Kernel::Sampled(_) => k.b.integral(t[n - 1], t[n])? / grid.width(n),
                other => other.value(t[n]).unwrap(),
            }
        };
        let r = (k.a0 * bv + conv[n] - 1.0).abs();
        if !r.is_finite() {
            return Err(Error::Evaluation(format!("non-finite identity residual at t = {}", t[n])));
        }
        residuals[n] = r;
    }
    let (worst_node, max_residual) = residuals
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc });
    Ok(PcStarReport {
        max_residual,
        worst_node,
        residuals,
        tol,
        rule,
        pass: max_residual <= tol,
    })
}
