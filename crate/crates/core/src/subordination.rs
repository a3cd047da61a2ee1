//! The subordinate kernel `h_γ` with `h_γ * h_γ = b * r_γ`, its
//! generalisation `h_{δ1,δ2,γ}`, and the limits `m0`, `m_inf`.
//!
//! `ĥ_γ = sqrt(b̂ r̂_γ)` with `r̂_γ = b̂ / (1 + γ b̂)`. Powers of `ĥ_γ` are
//! formed as `b̂^p (1 + γ b̂)^(-p/2)` with principal branches, which keeps
//! the branch cut on the negative real axis.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use statrs::function::beta::beta;

use crate::kernel::{gamma_fn, CreepKernel, Kernel, KernelFamily, SampledKernel};
use crate::multipliers::composite_weights;
use crate::quad::tanh_sinh;
use crate::talbot::{talbot_invert, DEFAULT_NODES};
use crate::volterra::{kernel_weights, ConvWeights};

/// `ĥ_γ(λ)^p` for built-in kernels.
pub fn hhat_pow(k: &CreepKernel, gamma: f64, lambda: Complex64, p: f64) -> Option<Complex64> {
    let b = k.laplace_b(lambda)?;
    let one = Complex64::new(1.0, 0.0);
    Some(b.powf(p) * (one + b * gamma).powf(-0.5 * p))
}

/// `ĥ_γ(λ) = sqrt(b̂(λ) r̂_γ(λ))`.
pub fn hhat(k: &CreepKernel, gamma: f64, lambda: Complex64) -> Option<Complex64> {
    hhat_pow(k, gamma, lambda, 1.0)
}

/// `ĥ_{δ1,δ2,γ} = Γ(1-δ1)Γ(1-δ2) b̂^(1-δ1) r̂_γ^(1-δ2)`.
pub fn general_hhat(k: &CreepKernel, d1: f64, d2: f64, gamma: f64, lambda: Complex64) -> Option<Complex64> {
    let b = k.laplace_b(lambda)?;
    let one = Complex64::new(1.0, 0.0);
    let c = gamma_fn(1.0 - d1) * gamma_fn(1.0 - d2);
    Some(b.powf(2.0 - d1 - d2) * (one + b * gamma).powf(d2 - 1.0) * c)
}

/// Point value of `h_{δ1,δ2,γ}` by contour inversion.
pub fn general_subordinate_value(k: &CreepKernel, d1: f64, d2: f64, gamma: f64, t: f64) -> Result<f64> {
    if !k.has_laplace() {
        return Err(Error::Unsupported("closed-form transform of b required".into()));
    }
    talbot_invert(|z| general_hhat(k, d1, d2, gamma, z).unwrap(), t, DEFAULT_NODES)
}

/// Constant of the pointwise bound
/// `h_{δ1,δ2,γ}(t) <= C l(t/2) [(1*l)(t/2)]^(1-δ1-δ2)`.
pub fn subordinate_bound_constant(d1: f64, d2: f64) -> f64 {
    (2.0 - d1 - d2) * gamma_fn(1.0 - d1) * gamma_fn(1.0 - d2) / ((1.0 - d1) * (1.0 - d2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubordinationSource {
    Talbot,
    ConvSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubordinationMethod {
    /// Contour inversion when `b̂` is known, otherwise the square-root
    /// recursion.
    #[default]
    Auto,
    Talbot,
    ConvSqrt,
}

/// Cell integrals of `h_γ` on a grid.
#[derive(Debug, Clone)]
pub struct SubordinateKernel {
    pub gamma: f64,
    pub grid: TimeGrid,
    pub h: Vec<f64>,
    pub source: SubordinationSource,
    pub warnings: Vec<String>,
    kernel: CreepKernel,
}

impl SubordinateKernel {
    /// Tabulated kernel with constant density on each cell.
    pub fn as_kernel(&self) -> Result<Kernel> {
        Ok(Kernel::Sampled(SampledKernel::new(
            self.grid.nodes().to_vec(),
            self.h.clone(),
        )?))
    }

    /// Convolution weights of `h_γ` on its own grid.
    pub fn weights(&self) -> Result<ConvWeights> {
        if self.grid.is_uniform() {
            ConvWeights::from_cells(&self.grid, self.h.clone())
        } else {
            kernel_weights(&self.as_kernel()?, &self.grid)
        }
    }

    pub fn averages(&self) -> Vec<f64> {
        (1..=self.grid.cells())
            .map(|n| self.h[n - 1] / self.grid.width(n))
            .collect()
    }

    /// Point value by contour inversion (built-in kernels only).
    pub fn value(&self, t: f64) -> Result<f64> {
        subordinate_value(&self.kernel, self.gamma, t)
    }

    /// `(1 * h_γ)(t)` by contour inversion (built-in kernels only).
    pub fn primitive(&self, t: f64) -> Result<f64> {
        subordinate_primitive(&self.kernel, self.gamma, t)
    }

    pub fn creep_kernel(&self) -> &CreepKernel {
        &self.kernel
    }
}

pub fn subordinate_value(k: &CreepKernel, gamma: f64, t: f64) -> Result<f64> {
    if !k.has_laplace() {
        return Err(Error::Unsupported("closed-form transform of b required".into()));
    }
    talbot_invert(|z| hhat(k, gamma, z).unwrap(), t, DEFAULT_NODES)
}

pub fn subordinate_primitive(k: &CreepKernel, gamma: f64, t: f64) -> Result<f64> {
    if !k.has_laplace() {
        return Err(Error::Unsupported("closed-form transform of b required".into()));
    }
    if t <= 0.0 {
        return Ok(0.0);
    }
    talbot_invert(|z| hhat(k, gamma, z).unwrap() / z, t, DEFAULT_NODES)
}

pub fn subordinate_kernel(k: &CreepKernel, gamma: f64, grid: &TimeGrid) -> Result<SubordinateKernel> {
    subordinate_kernel_with(k, gamma, grid, SubordinationMethod::Auto)
}

pub fn subordinate_kernel_with(
    k: &CreepKernel,
    gamma: f64,
    grid: &TimeGrid,
    method: SubordinationMethod,
) -> Result<SubordinateKernel> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::param("gamma", format!("must be nonnegative, got {gamma}")));
    }
    let use_talbot = match method {
        SubordinationMethod::Auto => k.has_laplace(),
        SubordinationMethod::Talbot => {
            if !k.has_laplace() {
                return Err(Error::Unsupported("closed-form transform of b required".into()));
            }
            true
        }
        SubordinationMethod::ConvSqrt => false,
    };
    let mut warnings = Vec::new();
    if use_talbot {
        match talbot_cells(k, gamma, grid) {
            Ok(h) => {
                return Ok(SubordinateKernel {
                    gamma,
                    grid: grid.clone(),
                    h,
                    source: SubordinationSource::Talbot,
                    warnings,
                    kernel: k.clone(),
                })
            }
            Err(e) => warnings.push(format!("contour inversion failed ({e}); using the square-root recursion")),
        }
    }
    let h = conv_sqrt_cells(k, gamma, grid)?;
    Ok(SubordinateKernel {
        gamma,
        grid: grid.clone(),
        h,
        source: SubordinationSource::ConvSqrt,
        warnings,
        kernel: k.clone(),
    })
}

fn talbot_cells(k: &CreepKernel, gamma: f64, grid: &TimeGrid) -> Result<Vec<f64>> {
    let t = grid.nodes();
    let mut prim = vec![0.0; t.len()];
    for n in 1..t.len() {
        prim[n] = subordinate_primitive(k, gamma, t[n])?;
    }
    let cells: Vec<f64> = prim.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(n) = cells.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFinite(format!("cell {} of h", n + 1)));
    }
    Ok(cells)
}

/// Cell masses of the convolution of two piecewise-constant densities on a
/// uniform grid, given their cell masses.
pub fn cell_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().min(b.len());
    let mut out = vec![0.0; n];
    for (k, o) in out.iter_mut().enumerate() {
        // cell k (0-based) receives half of pairs with i + j = k - 1 and
        // half of pairs with i + j = k
        let mut s = 0.0;
        for i in 0..=k {
            s += a[i] * b[k - i];
        }
        if k >= 1 {
            for i in 0..k {
                s += a[i] * b[k - 1 - i];
            }
        }
        *o = 0.5 * s;
    }
    out
}

/// Exponent `ρ` with `h_γ(t) ~ c t^(ρ-1)` near 0: exact for built-ins,
/// estimated from the first two cells of `b` otherwise.
pub fn leading_exponent(k: &CreepKernel, grid: &TimeGrid) -> Result<f64> {
    match k.family {
        KernelFamily::Heaviside => Ok(1.0),
        KernelFamily::FractionalRl { alpha } => Ok(alpha),
        KernelFamily::Custom => {
            let h = grid.node(1);
            let (b1, b2) = (k.b.primitive(h, 1)?, k.b.primitive(2.0 * h, 1)?);
            if !(b1 > 0.0 && b2 > b1) {
                return Err(Error::Consistency("b has no mass near t = 0".into()));
            }
            Ok((b2 / b1).log2().clamp(0.05, 1.0))
        }
    }
}

/// Triangular recursion for the cell masses `H` of `h_γ` from the cell
/// masses `K` of `b * r_γ`.
///
/// The density of `h` is modelled as `c t^(ρ-1)` on the first cell and as a
/// constant on every later cell. Under this model the self-convolution of
/// the first cell puts the fraction `ρ B(ρ, ρ) / 2` of its mass into cell 1,
/// its convolution with a later cell `j` puts `1 / (ρ + 1)` into cell `j`,
/// and two later cells share their mass equally between the two cells they
/// reach.
fn conv_sqrt_cells(k: &CreepKernel, gamma: f64, grid: &TimeGrid) -> Result<Vec<f64>> {
    let kw = composite_weights(k, gamma, grid)?;
    let kc = kw.cells();
    let n = kc.len();
    if !(kc[0] > 0.0) {
        return Err(Error::Consistency(format!(
            "first cell of b * r_γ is {}, cannot take its square root",
            kc[0]
        )));
    }
    let rho = leading_exponent(k, grid)?;
    let f11 = 0.5 * rho * beta(rho, rho);
    let a = 1.0 / (rho + 1.0);
    let mut h = vec![0.0; n];
    h[0] = (kc[0] / f11).sqrt();
    for m in 1..n {
        let mut s = 0.0;
        if m == 1 {
            s += (1.0 - f11) * h[0] * h[0];
        } else {
            s += 2.0 * h[0] * h[m - 1] * (1.0 - a);
        }
        for i in 1..m {
            s += 0.5 * h[i] * h[m - i];
            if m - 1 - i >= 1 {
                s += 0.5 * h[i] * h[m - 1 - i];
            }
        }
        let v = (kc[m] - s) / (2.0 * h[0] * a);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("square-root recursion at cell {}", m + 1)));
        }
        h[m] = v;
    }
    if let Some(m) = h.iter().position(|&v| v < -1e-12 * h[0]) {
        return Err(Error::Consistency(format!(
            "square-root recursion produced a negative cell {} (value {:.3e})",
            m + 1,
            h[m]
        )));
    }
    Ok(h)
}

/// Cell masses of `h * h` under the first-cell power-law model used by the
/// square-root recursion.
fn model_square(h: &[f64], rho: f64) -> Vec<f64> {
    let n = h.len();
    let f11 = 0.5 * rho * beta(rho, rho);
    let a = 1.0 / (rho + 1.0);
    let mut out = vec![0.0; n];
    let mut add = |cell: usize, v: f64| {
        if cell < n {
            out[cell] += v;
        }
    };
    add(0, f11 * h[0] * h[0]);
    add(1, (1.0 - f11) * h[0] * h[0]);
    for j in 1..n {
        add(j, 2.0 * a * h[0] * h[j]);
        add(j + 1, 2.0 * (1.0 - a) * h[0] * h[j]);
    }
    for i in 1..n {
        for j in 1..n - i {
            let v = 0.5 * h[i] * h[j];
            add(i + j, v);
            add(i + j + 1, v);
        }
    }
    out
}

/// Residual of `h * h = b * r_γ` in integrated form at the nodes.
#[derive(Debug, Clone, Serialize)]
pub struct ConvolutionResidual {
    pub times: Vec<f64>,
    /// `(1 * h * h)(t_n)`.
    pub hh: Vec<f64>,
    /// `(1 * b * r_γ)(t_n)`.
    pub br: Vec<f64>,
    pub max_abs: f64,
}

/// Compares `1 * h * h` with `1 * b * r_γ` at the nodes of a uniform grid.
///
/// On the contour path `(1*h*h)(t) = ∫_0^t H(t - σ) h(σ) dσ` uses point
/// values of `h` and `H = 1*h`; on the recursion path the discrete cell
/// convolution of the recursion's own model is used. `1 * b * r_γ` comes
/// from [`composite_weights`].
pub fn convolution_residual(sk: &SubordinateKernel) -> Result<ConvolutionResidual> {
    let grid = &sk.grid;
    let kw = composite_weights(&sk.kernel, sk.gamma, grid)?;
    let br = kw.primitive_at_nodes().to_vec();
    let t = grid.nodes().to_vec();
    let hh: Vec<f64> = match sk.source {
        SubordinationSource::ConvSqrt => {
            let rho = leading_exponent(&sk.kernel, grid)?;
            let cc = model_square(&sk.h, rho);
            let mut acc = vec![0.0; t.len()];
            for n in 1..t.len() {
                acc[n] = acc[n - 1] + cc[n - 1];
            }
            acc
        }
        SubordinationSource::Talbot => {
            let mut out = vec![0.0; t.len()];
            for n in 1..t.len() {
                let k = &sk.kernel;
                let g = sk.gamma;
                let q = tanh_sinh(
                    |_, dl, dr| {
                        let big = subordinate_primitive(k, g, dr).unwrap_or(f64::NAN);
                        let small = subordinate_value(k, g, dl).unwrap_or(f64::NAN);
                        big * small
                    },
                    0.0,
                    t[n],
                    1e-12,
                );
                if !q.value.is_finite() {
                    return Err(Error::NonFinite(format!("h * h at t = {}", t[n])));
                }
                out[n] = q.value;
            }
            out
        }
    };
    let max_abs = hh
        .iter()
        .zip(&br)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(ConvolutionResidual { times: t, hh, br, max_abs })
}

/// `m0` and `m_inf` of the partner of `h_{δ1,δ2,γ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MLimits {
    pub m0: f64,
    pub m_inf: f64,
}

pub fn m_limits(k: &CreepKernel, d1: f64, d2: f64, gamma: f64) -> Result<MLimits> {
    for (name, d) in [("delta1", d1), ("delta2", d2)] {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::param(name, format!("must lie in (0, 1), got {d}")));
        }
    }
    if d1 + d2 < 1.0 {
        return Err(Error::param("delta1 + delta2", "must be at least 1"));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::param("gamma", format!("must be nonnegative, got {gamma}")));
    }
    let (k0, kinf) = k
        .k0_kinf()
        .ok_or_else(|| Error::Unsupported("k0 and k_inf are unknown for this kernel".into()))?;
    let g = gamma_fn(1.0 - d1) * gamma_fn(1.0 - d2);
    let m_inf = kinf.powf(1.0 - d1) * (kinf + gamma).powf(1.0 - d2) / g;
    let m0 = if d1 + d2 > 1.0 { 0.0 } else { k0 / g };
    Ok(MLimits { m0, m_inf })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_convolution_of_constants() {
        // 1 * 1 = t: cell masses of t on unit cells are k + 1/2
        let ones = vec![1.0; 5];
        let c = cell_convolution(&ones, &ones);
        for (k, v) in c.iter().enumerate() {
            assert!((v - (k as f64 + 0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn bound_constant_for_half_half() {
        assert!((subordinate_bound_constant(0.5, 0.5) - 4.0 * std::f64::consts::PI).abs() < 1e-12);
    }
}
