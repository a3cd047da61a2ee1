//! Propagator symbols `C(t, ξ)` and `S(t, ξ)`.
//!
//! With `K = b * r_γ` and `ν = |ξ|^β`, `C(·, ξ)` solves `C + ν K*C = 1` and
//! `S(·, ξ)` solves `S + ν K*S = K`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernel::{CreepKernel, KernelFamily};
use crate::talbot::{talbot_invert, DEFAULT_NODES};
use crate::volterra::{apply_kernel, kernel_weights, solve_direct, ConvWeights, Rule};

/// Weights of the composite kernel `b * r_γ` on a uniform grid, carrying
/// its first and second primitives.
///
/// When `b̂` is known the primitives come from contour inversion of
/// `b̂² / (λ^p (1 + γ b̂))`; otherwise from [`composite_weights_time_domain`].
pub fn composite_weights(k: &CreepKernel, gamma: f64, grid: &TimeGrid) -> Result<ConvWeights> {
    check_composite(gamma, grid)?;
    if !k.has_laplace() {
        return composite_weights_time_domain(k, gamma, grid);
    }
    let khat = |z: Complex64| {
        let b = k.laplace_b(z).unwrap();
        b * b / (b * gamma + 1.0)
    };
    let t = grid.nodes();
    let mut k1 = vec![0.0; t.len()];
    let mut k2 = vec![0.0; t.len()];
    for n in 1..t.len() {
        k1[n] = talbot_invert(|z| khat(z) / z, t[n], DEFAULT_NODES)?;
        k2[n] = talbot_invert(|z| khat(z) / (z * z), t[n], DEFAULT_NODES)?;
    }
    ConvWeights::from_primitives(grid, k1, Some(k2))
}

/// Composite weights from `R_p + γ b*R_p = 1^{*p} * b` and `K_p = b * R_p`,
/// both discretised with the product trapezoid rule.
pub fn composite_weights_time_domain(k: &CreepKernel, gamma: f64, grid: &TimeGrid) -> Result<ConvWeights> {
    check_composite(gamma, grid)?;
    let bw = kernel_weights(&k.b, grid)?;
    let b1 = bw.primitive_at_nodes().to_vec();
    let b2 = bw
        .second_primitive_at_nodes()
        .ok_or_else(|| Error::Unsupported("second primitive of b".into()))?
        .to_vec();
    let r1 = solve_direct(&bw, gamma, &b1, Rule::Trapezoid)?;
    let r2 = solve_direct(&bw, gamma, &b2, Rule::Trapezoid)?;
    let k1 = apply_kernel(&bw, &r1, Rule::Trapezoid)?;
    let k2 = apply_kernel(&bw, &r2, Rule::Trapezoid)?;
    ConvWeights::from_primitives(grid, k1, Some(k2))
}

fn check_composite(gamma: f64, grid: &TimeGrid) -> Result<()> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::param("gamma", format!("must be nonnegative, got {gamma}")));
    }
    if !grid.is_uniform() {
        return Err(Error::Unsupported("composite kernel needs a uniform grid".into()));
    }
    Ok(())
}

/// Tabulated `C` and cell integrals of `S` over `|ξ|` and time.
#[derive(Debug, Clone, Serialize)]
pub struct MultiplierTable {
    pub beta: f64,
    pub gamma: f64,
    pub family: KernelFamily,
    pub grid: TimeGrid,
    pub xi_mags: Vec<f64>,
    /// `c[m][n] = C(t_n, ξ_m)`.
    pub c: Vec<Vec<f64>>,
    /// `s_int[m][n - 1] = ∫_{cell n} S(·, ξ_m)`.
    pub s_int: Vec<Vec<f64>>,
    #[serde(skip)]
    composite: ConvWeights,
}

/// Log-spaced magnitudes on `[lo, hi]` preceded by an exact zero.
pub fn default_magnitudes(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut v = vec![0.0];
    if count == 1 {
        v.push(hi);
        return v;
    }
    let (a, b) = (lo.ln(), hi.ln());
    for i in 0..count {
        v.push((a + (b - a) * i as f64 / (count - 1) as f64).exp());
    }
    v
}

/// Solves for `C(·, ξ)` and `S(·, ξ)` at every magnitude in `xi_mags`.
pub fn build_multipliers(
    k: &CreepKernel,
    gamma: f64,
    beta: f64,
    xi_mags: &[f64],
    grid: &TimeGrid,
) -> Result<MultiplierTable> {
    if !(beta > 1.0 && beta <= 2.0) {
        return Err(Error::param("beta", format!("must lie in (1, 2], got {beta}")));
    }
    if xi_mags.is_empty() {
        return Err(Error::param("xi_mags", "need at least one magnitude"));
    }
    if xi_mags.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || xi_mags.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("xi_mags", "must be nonnegative and strictly increasing"));
    }
    let composite = composite_weights(k, gamma, grid)?;
    let k1 = composite.primitive_at_nodes().to_vec();
    let ones = vec![1.0; grid.cells() + 1];
    let rows: Vec<Result<(Vec<f64>, Vec<f64>)>> = xi_mags
        .par_iter()
        .map(|&xi| {
            let nu = xi.powf(beta);
            let wrap = |e: Error| match e {
                Error::Stability { step, modulus } => Error::Consistency(format!(
                    "singular step {step} (|pivot| = {modulus:.3e}) at |ξ| = {xi}"
                )),
                other => other,
            };
            let c = solve_direct(&composite, nu, &ones, Rule::Trapezoid).map_err(wrap)?;
            let s1 = solve_direct(&composite, nu, &k1, Rule::Trapezoid).map_err(wrap)?;
            let s = s1.windows(2).map(|w| w[1] - w[0]).collect();
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("C at |ξ| = {xi}")));
            }
            Ok((c, s))
        })
        .collect();
    let mut c = Vec::with_capacity(rows.len());
    let mut s_int = Vec::with_capacity(rows.len());
    for row in rows {
        let (a, b) = row?;
        c.push(a);
        s_int.push(b);
    }
    Ok(MultiplierTable {
        beta,
        gamma,
        family: k.family,
        grid: grid.clone(),
        xi_mags: xi_mags.to_vec(),
        c,
        s_int,
        composite,
    })
}

/// Bracketing rows and interpolation weight for a magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowLookup {
    pub lo: usize,
    pub hi: usize,
    pub weight: f64,
}

impl MultiplierTable {
    /// Composite kernel weights shared by all rows.
    pub fn composite(&self) -> &ConvWeights {
        &self.composite
    }

    pub fn max_magnitude(&self) -> f64 {
        *self.xi_mags.last().unwrap()
    }

    /// Locates `xi`; exact matches return `lo == hi`.
    pub fn lookup(&self, xi: f64) -> Result<RowLookup> {
        let mags = &self.xi_mags;
        let tol = 1e-12 * mags.last().unwrap().max(1.0);
        if xi < mags[0] - tol || xi > mags[mags.len() - 1] + tol {
            return Err(Error::Range(format!(
                "|ξ| = {xi} outside the table range [{}, {}]",
                mags[0],
                mags[mags.len() - 1]
            )));
        }
        let i = mags.partition_point(|&m| m < xi - tol);
        if i < mags.len() && (mags[i] - xi).abs() <= tol {
            return Ok(RowLookup { lo: i, hi: i, weight: 0.0 });
        }
        let hi = i.min(mags.len() - 1);
        let lo = hi - 1;
        Ok(RowLookup {
            lo,
            hi,
            weight: (xi - mags[lo]) / (mags[hi] - mags[lo]),
        })
    }

    /// `C(t_n, |ξ|)` at node `n`.
    pub fn c_at(&self, look: RowLookup, n: usize) -> f64 {
        let a = self.c[look.lo][n];
        if look.lo == look.hi {
            a
        } else {
            a + look.weight * (self.c[look.hi][n] - a)
        }
    }

    /// `∫_{cell n} S(·, |ξ|)` for cell `n >= 1`.
    pub fn s_at(&self, look: RowLookup, n: usize) -> f64 {
        let a = self.s_int[look.lo][n - 1];
        if look.lo == look.hi {
            a
        } else {
            a + look.weight * (self.s_int[look.hi][n - 1] - a)
        }
    }

    /// Max residual of the discrete `C + ν K*C = 1` for row `m`.
    pub fn c_residual(&self, m: usize) -> Result<f64> {
        let nu = self.xi_mags[m].powf(self.beta);
        let conv = apply_kernel(&self.composite, &self.c[m], Rule::Trapezoid)?;
        Ok((1..conv.len())
            .map(|n| (self.c[m][n] + nu * conv[n] - 1.0).abs())
            .fold(0.0, f64::max))
    }

    /// `max |C|` over the whole table.
    pub fn sup_c(&self) -> f64 {
        self.c
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Solution of `w'' + γw' + |ξ|²w = 0`, `w(0) = 1`, `w'(0) = 0`.
pub fn oracle_damped_wave(gamma: f64, xi: f64, t: f64) -> f64 {
    let half = 0.5 * gamma;
    let d = xi * xi - half * half;
    let decay = (-half * t).exp();
    if d.abs() <= 1e-14 * (xi * xi).max(half * half).max(1e-300) {
        return decay * (1.0 + half * t);
    }
    if d > 0.0 {
        let w = d.sqrt();
        let x = w * t;
        let sinc = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
        decay * (x.cos() + half * t * sinc)
    } else {
        let w = (-d).sqrt();
        let x = w * t;
        if x < 1.0 {
            let shc = if x < 1e-8 { 1.0 + x * x / 6.0 } else { x.sinh() / x };
            decay * (x.cosh() + half * t * shc)
        } else {
            let a = 0.5 * (1.0 + half / w) * ((w - half) * t).exp();
            let b = 0.5 * (1.0 - half / w) * ((-w - half) * t).exp();
            a + b
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_regimes_are_continuous() {
        let g = 2.0;
        for t in [0.1, 1.0, 3.0] {
            let c = oracle_damped_wave(g, 1.0, t);
            assert!((c - (-t).exp() * (1.0 + t)).abs() < 1e-15);
            let above = oracle_damped_wave(g, 1.0 + 1e-7, t);
            let below = oracle_damped_wave(g, 1.0 - 1e-7, t);
            assert!((above - c).abs() < 1e-6 && (below - c).abs() < 1e-6);
        }
        assert_eq!(oracle_damped_wave(1.0, 0.0, 5.0), 1.0);
    }

    #[test]
    fn lookup_exact_and_interpolated() {
        let k = CreepKernel::heaviside();
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let t = build_multipliers(&k, 1.0, 2.0, &[0.0, 1.0, 2.0], &g).unwrap();
        assert_eq!(t.lookup(1.0).unwrap(), RowLookup { lo: 1, hi: 1, weight: 0.0 });
        let l = t.lookup(1.5).unwrap();
        assert_eq!((l.lo, l.hi), (1, 2));
        assert!((l.weight - 0.5).abs() < 1e-15);
        assert!(t.lookup(2.5).is_err());
    }
}
