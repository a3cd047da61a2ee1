//! Littlewood–Paley randomisation of data and Monte Carlo tail curves.
//!
//! Blocks use `ϱ_0 = ϱ(|ξ|)` and `ϱ_j = ϱ(2^{-j}|ξ|) - ϱ(2^{1-j}|ξ|)` with
//! the smooth cutoff `ϱ(r) = ψ(2 - r) / (ψ(2 - r) + ψ(r - 1))`,
//! `ψ(x) = e^{-1/x}` for `x > 0`. The sum over blocks telescopes to one.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{evolve_linear_nodes, Fft3, SpectralField, TorusGrid};
use crate::multipliers::MultiplierTable;

/// Version tag of the cutoff profile, recorded with every ensemble.
pub const CUTOFF_PROFILE: &str = "exp-mollifier-v1";

fn psi(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// `ϱ(r)`: one on `r <= 1`, zero on `r >= 2`, smooth in between.
pub fn cutoff(r: f64) -> f64 {
    if r <= 1.0 {
        return 1.0;
    }
    if r >= 2.0 {
        return 0.0;
    }
    let a = psi(2.0 - r);
    a / (a + psi(r - 1.0))
}

/// Weight of block `j` at magnitude `mag`.
pub fn block_weight(j: usize, mag: f64) -> f64 {
    if j == 0 {
        cutoff(mag)
    } else {
        let s = (-(j as f64)).exp2();
        cutoff(s * mag) - cutoff(2.0 * s * mag)
    }
}

/// Number of blocks needed to cover magnitudes up to `max_mag`.
pub fn block_count(max_mag: f64) -> usize {
    if max_mag <= 1.0 {
        1
    } else {
        max_mag.log2().ceil() as usize + 1
    }
}

#[derive(Debug, Clone)]
pub struct LpDecomposition {
    pub blocks: Vec<SpectralField>,
}

impl LpDecomposition {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// `Σ_j blocks[j]`.
    pub fn reconstruct(&self) -> SpectralField {
        let mut out = self.blocks[0].clone();
        for b in &self.blocks[1..] {
            out = out.add(b);
        }
        out
    }

    pub fn block_norms(&self, grid: &TorusGrid) -> Vec<f64> {
        self.blocks.iter().map(|b| b.l2_norm(grid)).collect()
    }
}

/// Splits `u` into dyadic blocks over the whole lattice.
pub fn lp_decompose(u: &SpectralField, grid: &TorusGrid) -> LpDecomposition {
    let max_mag = (0..grid.len()).map(|i| grid.magnitude(i)).fold(0.0, f64::max);
    let count = block_count(max_mag);
    let blocks = (0..count)
        .map(|j| SpectralField {
            coeffs: u
                .coeffs
                .iter()
                .enumerate()
                .map(|(idx, c)| c * block_weight(j, grid.magnitude(idx)))
                .collect(),
        })
        .collect();
    LpDecomposition { blocks }
}

/// Law of the block multipliers `X_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RandomLaw {
    #[default]
    Rademacher,
    StandardGaussian,
}

impl RandomLaw {
    /// Constant `ι` in `E e^{εX} <= e^{ι ε²}`.
    pub fn iota(&self) -> f64 {
        0.5
    }
}

/// Independent generator for the triple `(seed, k, j)`.
fn stream(seed: u64, k: u64, j: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&k.to_le_bytes());
    key[16..24].copy_from_slice(&j.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// The multipliers `X_0..X_{J-1}` of realisation `k`.
pub fn draw(law: RandomLaw, seed: u64, k: u64, count: usize) -> Vec<f64> {
    (0..count as u64)
        .map(|j| {
            let mut rng = stream(seed, k, j);
            match law {
                RandomLaw::Rademacher => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
                RandomLaw::StandardGaussian => rng.sample(StandardNormal),
            }
        })
        .collect()
}

/// `u^ω = Σ_j X_j blocks[j]` for realisation `k`.
pub fn randomize(decomp: &LpDecomposition, law: RandomLaw, seed: u64, k: u64) -> SpectralField {
    combine(decomp, &draw(law, seed, k, decomp.len()))
}

fn combine(decomp: &LpDecomposition, xs: &[f64]) -> SpectralField {
    let len = decomp.blocks[0].coeffs.len();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); len];
    for (b, &x) in decomp.blocks.iter().zip(xs) {
        for (c, v) in coeffs.iter_mut().zip(&b.coeffs) {
            *c += v * x;
        }
    }
    SpectralField { coeffs }
}

/// `||F^{-1}((1 + |ξ|²)^{s/2} ũ)||_{L^p}` on the lattice.
pub fn bessel_potential_norm(u: &SpectralField, grid: &TorusGrid, fft: &Fft3, s: f64, p: f64) -> f64 {
    u.apply_radial(grid, |m| Complex64::new((1.0 + m * m).powf(0.5 * s), 0.0))
        .lp_norm(grid, fft, p)
}

/// Physical values of `C(t_n) blocks[j]` at chosen nodes, so that the linear
/// evolution of any realisation is a weighted sum.
pub struct EvolvedBlocks {
    pub times: Vec<f64>,
    /// `values[n][j]` over the lattice (real parts).
    values: Vec<Vec<Vec<f64>>>,
    cell_volume: f64,
}

impl EvolvedBlocks {
    pub fn new(
        decomp: &LpDecomposition,
        table: &MultiplierTable,
        grid: &TorusGrid,
        nodes: &[usize],
    ) -> Result<Self> {
        let fft = Fft3::new(grid);
        let per_block = decomp
            .blocks
            .iter()
            .map(|b| evolve_linear_nodes(b, table, grid, nodes))
            .collect::<Result<Vec<_>>>()?;
        let times = nodes.iter().map(|&n| table.grid.node(n)).collect();
        let values = (0..nodes.len())
            .map(|i| {
                per_block
                    .par_iter()
                    .map(|fields| fields[i].to_physical(&fft).iter().map(|v| v.re).collect())
                    .collect()
            })
            .collect();
        Ok(EvolvedBlocks {
            times,
            values,
            cell_volume: grid.cell_volume(),
        })
    }

    /// `||Σ_j X_j C(t)blocks[j]||_{L^q_t L^p_x}` over the stored nodes, with
    /// the trapezoid rule in time and maxima for infinite exponents.
    pub fn mixed_norm(&self, xs: &[f64], q: f64, p: f64) -> f64 {
        let inner: Vec<f64> = self
            .values
            .iter()
            .map(|blocks| {
                let len = blocks[0].len();
                let int_p = (p.fract() == 0.0 && p <= 16.0).then_some(p as i32);
                let mut acc = 0.0f64;
                let mut mx = 0.0f64;
                for i in 0..len {
                    let v: f64 = blocks.iter().zip(xs).map(|(b, x)| b[i] * x).sum::<f64>().abs();
                    if p.is_infinite() {
                        mx = mx.max(v);
                    } else if let Some(k) = int_p {
                        acc += v.powi(k);
                    } else {
                        acc += v.powf(p);
                    }
                }
                if p.is_infinite() {
                    mx
                } else {
                    (acc * self.cell_volume).powf(1.0 / p)
                }
            })
            .collect();
        if q.is_infinite() || inner.len() == 1 {
            return inner.iter().cloned().fold(0.0, f64::max);
        }
        let t = &self.times;
        let mut acc = 0.0;
        for n in 1..t.len() {
            acc += 0.5 * (t[n] - t[n - 1]) * (inner[n].powf(q) + inner[n - 1].powf(q));
        }
        acc.powf(1.0 / q)
    }
}

/// One point of the empirical tail curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailPoint {
    pub threshold: f64,
    pub probability: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Weighted least-squares fit of `ln P` against `ς²`.
#[derive(Debug, Clone, Serialize)]
pub struct GaussianFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub samples: usize,
    pub curve: Vec<TailPoint>,
    pub fit: Option<GaussianFit>,
    pub warnings: Vec<String>,
}

/// Wilson score interval at 95%.
pub fn wilson_interval(hits: usize, n: usize) -> (f64, f64) {
    let z = 1.959963984540054;
    let nf = n as f64;
    let p = hits as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Thresholds at sample quantiles with exceedance from 1/2 down to about
/// `2 / samples`, geometrically spaced.
pub fn default_thresholds(values: &[f64], count: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let lo = (2.0 / n as f64).max(1e-3);
    let mut out: Vec<f64> = (0..count)
        .map(|i| {
            let e = 0.5 * (lo / 0.5f64).powf(i as f64 / (count - 1).max(1) as f64);
            let idx = (((1.0 - e) * n as f64).floor() as usize).min(n - 1);
            sorted[idx]
        })
        .collect();
    out.dedup();
    out
}

/// Tail curve and Gaussian-shape fit from functional samples.
pub fn tail_from_samples(values: &[f64], thresholds: &[f64]) -> Result<TailReport> {
    if values.is_empty() {
        return Err(Error::param("samples", "need at least one sample"));
    }
    let n = values.len();
    let mut warnings = Vec::new();
    let curve: Vec<TailPoint> = thresholds
        .iter()
        .map(|&t| {
            let hits = values.iter().filter(|&&v| v >= t).count();
            if hits == 0 || hits == n {
                warnings.push(format!("threshold {t:.6e} is degenerate (all samples on one side)"));
            }
            let (lo, hi) = wilson_interval(hits, n);
            TailPoint {
                threshold: t,
                probability: hits as f64 / n as f64,
                ci_low: lo,
                ci_high: hi,
            }
        })
        .collect();

    let pts: Vec<(f64, f64, f64)> = curve
        .iter()
        .filter(|c| c.probability >= 1e-3 && c.probability <= 0.5)
        .map(|c| {
            let p = c.probability;
            (c.threshold * c.threshold, p.ln(), n as f64 * p / (1.0 - p))
        })
        .collect();
    let fit = if pts.len() >= 3 {
        let sw: f64 = pts.iter().map(|p| p.2).sum();
        let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
        let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
        let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
        let syy: f64 = pts.iter().map(|p| p.2 * (p.1 - my).powi(2)).sum();
        if sxx <= 0.0 {
            warnings.push("thresholds coincide; no fit".into());
            None
        } else {
            let slope = sxy / sxx;
            let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
            if slope >= 0.0 {
                warnings.push(format!("fitted slope {slope:.4e} is not negative"));
            }
            Some(GaussianFit {
                slope,
                intercept: my - slope * mx,
                r_squared: r2,
                points: pts.len(),
            })
        }
    } else {
        warnings.push(format!("only {} thresholds with P in [1e-3, 0.5]; no fit", pts.len()));
        None
    };
    Ok(TailReport {
        samples: n,
        curve,
        fit,
        warnings,
    })
}

/// Monte Carlo tail of `functional(u^ω)` over realisations `0..samples`.
pub fn mc_tail<F>(
    decomp: &LpDecomposition,
    law: RandomLaw,
    functional: F,
    thresholds: Option<&[f64]>,
    samples: usize,
    seed: u64,
) -> Result<(TailReport, Vec<f64>)>
where
    F: Fn(&SpectralField) -> f64 + Sync,
{
    mc_tail_blocks(
        decomp.len(),
        law,
        |xs| functional(&combine(decomp, xs)),
        thresholds,
        samples,
        seed,
    )
}

/// As [`mc_tail`], but the functional receives the block multipliers
/// `X_0..X_{J-1}` directly, so linear functionals can reuse block data.
pub fn mc_tail_blocks<F>(
    count: usize,
    law: RandomLaw,
    functional: F,
    thresholds: Option<&[f64]>,
    samples: usize,
    seed: u64,
) -> Result<(TailReport, Vec<f64>)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if samples < 100 {
        return Err(Error::param("samples", format!("need at least 100, got {samples}")));
    }
    let values: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|k| functional(&draw(law, seed, k, count)))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("functional at realisation {i}")));
    }
    let th = match thresholds {
        Some(t) => t.to_vec(),
        None => default_thresholds(&values, 24),
    };
    Ok((tail_from_samples(&values, &th)?, values))
}
