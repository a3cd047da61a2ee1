//! Moment functions of relaxation solutions.
//!
//! `c_δ(t) = Γ(δ)^{-1} ∫_0^∞ γ^{δ-1} s_γ(t) dγ` and the same with `r_γ` for
//! `d_δ`; their transforms are `Γ(1-δ) λ^{-1} l̂^{-δ}` and `Γ(1-δ) l̂^{1-δ}`.
//! The γ-integral is evaluated with the trapezoid rule in `u = ln γ`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernel::{gamma_fn, CreepKernel};
use crate::subordination::{hhat_pow, subordinate_kernel, SubordinateKernel};
use crate::talbot::{talbot_invert, DEFAULT_NODES};
use crate::volterra::{solve_relaxation_with, ConvWeights, Rule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    /// Moment of `s_γ`.
    C,
    /// Moment of `r_γ`.
    D,
    /// `c`-moment with `l = h_γ`.
    Rho1,
    /// `d`-moment with `l = h_γ`.
    Rho,
    Sigma,
}

/// Sampled moment function. Values of `c`-type moments sit at the nodes
/// `t_1..t_N`; `d`-type moments obtained by quadrature are cell averages
/// over `[t_{n-1}, t_n]`, reported against the right node.
#[derive(Debug, Clone, Serialize)]
pub struct MomentFunction {
    pub kind: MomentKind,
    pub delta: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub cell_averaged: bool,
}

/// Settings of the γ-quadrature.
#[derive(Debug, Clone, Copy)]
pub struct MomentOptions {
    /// Step in `u = ln γ`.
    pub du: f64,
    /// Left cut-off: `γ_min (1*l)(T) = lower`.
    pub lower: f64,
    /// Integrand level, relative to its running maximum, at which the
    /// right tail is cut.
    pub cut: f64,
    pub rule: Rule,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions {
            du: 0.1,
            lower: 1e-6,
            cut: 1e-12,
            rule: Rule::Rectangle,
        }
    }
}

/// Moment by quadrature over γ of relaxation solves on the weights `w`.
pub fn moment(kind: MomentKind, w: &ConvWeights, delta: f64) -> Result<MomentFunction> {
    moment_with(kind, w, delta, MomentOptions::default())
}

pub fn moment_with(kind: MomentKind, w: &ConvWeights, delta: f64, opts: MomentOptions) -> Result<MomentFunction> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let use_s = match kind {
        MomentKind::C | MomentKind::Rho1 => true,
        MomentKind::D | MomentKind::Rho => false,
        MomentKind::Sigma => return Err(Error::param("kind", "sigma is built by rho_sigma")),
    };
    let grid = w.grid();
    let nn = grid.cells();
    let lp = w.primitive_at_nodes();
    let lt = lp[nn];
    if !(lt > 0.0) {
        return Err(Error::Range("kernel has no mass on the grid".into()));
    }
    let avg = w.averages();
    let gmin = opts.lower / lt;
    let u0 = gmin.ln();

    // samples of the integrand e^{uδ} x_{e^u}(t_n)
    let sample = |u: f64| -> Result<Vec<f64>> {
        let g = u.exp();
        let p = solve_relaxation_with(w, g, opts.rule)?;
        let scale = (u * delta).exp();
        Ok(if use_s {
            p.s[1..].iter().map(|v| v * scale).collect()
        } else {
            p.r.iter().map(|v| v * scale).collect()
        })
    };

    // left tail from the small-γ expansion
    let mut total: Vec<f64> = (0..nn)
        .map(|i| {
            if use_s {
                gmin.powf(delta) / delta - lp[i + 1] * gmin.powf(1.0 + delta) / (1.0 + delta)
            } else {
                avg[i] * gmin.powf(delta) / delta
            }
        })
        .collect();

    // march in blocks so the stopping test can run between them
    const BLOCK: usize = 32;
    let mut first = true;
    let mut peak = vec![0.0f64; nn];
    let mut last = vec![0.0f64; nn];
    let mut k0 = 0usize;
    let max_steps = (400.0 / opts.du) as usize;
    loop {
        let us: Vec<f64> = (k0..k0 + BLOCK).map(|k| u0 + k as f64 * opts.du).collect();
        let vals: Vec<Result<Vec<f64>>> = us.par_iter().map(|&u| sample(u)).collect();
        let mut done = false;
        for (j, v) in vals.into_iter().enumerate() {
            let v = v?;
            let weight = if first && j == 0 { 0.5 } else { 1.0 };
            for i in 0..nn {
                total[i] += weight * opts.du * v[i];
                peak[i] = peak[i].max(v[i].abs());
            }
            last = v;
            // once past every peak and below the cut, stop
            if !first || j > 0 {
                let below = (0..nn).all(|i| last[i].abs() <= opts.cut * peak[i]);
                if below {
                    done = true;
                    // undo the full weight of the final sample, add the tail
                    for i in 0..nn {
                        total[i] -= 0.5 * opts.du * last[i];
                        total[i] += last[i] / (1.0 - delta);
                    }
                    break;
                }
            }
        }
        first = false;
        k0 += BLOCK;
        if done {
            break;
        }
        if k0 > max_steps {
            return Err(Error::Range(format!(
                "γ-quadrature did not decay below {:e} within u <= {:.1}",
                opts.cut,
                u0 + k0 as f64 * opts.du
            )));
        }
    }
    let norm = 1.0 / gamma_fn(delta);
    Ok(MomentFunction {
        kind,
        delta,
        times: grid.nodes()[1..].to_vec(),
        values: total.into_iter().map(|v| v * norm).collect(),
        cell_averaged: !use_s,
    })
}

/// Moment by contour inversion of its transform, given `l̂`.
pub fn moment_talbot<F>(kind: MomentKind, lhat: F, delta: f64, grid: &TimeGrid) -> Result<MomentFunction>
where
    F: Fn(Complex64) -> Complex64,
{
    if !(delta >= 0.0 && delta < 1.0) {
        return Err(Error::param("delta", format!("must lie in [0, 1), got {delta}")));
    }
    let g = gamma_fn(1.0 - delta);
    let use_s = matches!(kind, MomentKind::C | MomentKind::Rho1);
    let times = grid.nodes()[1..].to_vec();
    let values = times
        .iter()
        .map(|&t| {
            talbot_invert(
                |z| {
                    let l = lhat(z);
                    if use_s {
                        l.powf(-delta) / z * g
                    } else {
                        l.powf(1.0 - delta) * g
                    }
                },
                t,
                DEFAULT_NODES,
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MomentFunction {
        kind,
        delta,
        times,
        values,
        cell_averaged: false,
    })
}

/// Which of `ρ_{1,δ}`, `ρ_δ`, `σ` to build.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoSigma {
    Rho1(f64),
    Rho(f64),
    /// `σ` for `τ ∈ [-1, 1)`.
    Sigma(f64),
}

/// `ρ_{1,δ}`, `ρ_δ` or `σ` by quadrature on `h_γ`.
pub fn rho_sigma(k: &CreepKernel, gamma: f64, which: RhoSigma, grid: &TimeGrid) -> Result<MomentFunction> {
    let sk = subordinate_kernel(k, gamma, grid)?;
    rho_sigma_from(&sk, which)
}

pub fn rho_sigma_from(sk: &SubordinateKernel, which: RhoSigma) -> Result<MomentFunction> {
    let w = sk.weights()?;
    let grid = &sk.grid;
    match which {
        RhoSigma::Rho1(d) if d == 0.0 => Ok(MomentFunction {
            kind: MomentKind::Rho1,
            delta: 0.0,
            times: grid.nodes()[1..].to_vec(),
            values: vec![1.0; grid.cells()],
            cell_averaged: false,
        }),
        RhoSigma::Rho1(d) => moment(MomentKind::Rho1, &w, d),
        RhoSigma::Rho(d) if d == 0.0 => Ok(h_averages(sk, MomentKind::Rho, 0.0)),
        RhoSigma::Rho(d) => moment(MomentKind::Rho, &w, d),
        RhoSigma::Sigma(tau) => {
            if !(-1.0..1.0).contains(&tau) {
                return Err(Error::param("tau", format!("must lie in [-1, 1), got {tau}")));
            }
            if tau > 0.0 {
                let mut m = moment(MomentKind::Rho, &w, tau)?;
                m.kind = MomentKind::Sigma;
                Ok(m)
            } else if tau == 0.0 {
                Ok(h_averages(sk, MomentKind::Sigma, 0.0))
            } else {
                // σ = Γ(1-τ)/Γ(-τ) (h_γ * ρ_{1+τ}) at the nodes
                let inner = if tau == -1.0 {
                    sk.averages()
                } else {
                    moment(MomentKind::Rho, &w, 1.0 + tau)?.values
                };
                let c = gamma_fn(1.0 - tau) / gamma_fn(-tau);
                let nn = grid.cells();
                let values = (1..=nn)
                    .map(|n| c * (1..=n).map(|m| inner[m - 1] * w.rect(n, m)).sum::<f64>())
                    .collect();
                Ok(MomentFunction {
                    kind: MomentKind::Sigma,
                    delta: tau,
                    times: grid.nodes()[1..].to_vec(),
                    values,
                    cell_averaged: false,
                })
            }
        }
    }
}

fn h_averages(sk: &SubordinateKernel, kind: MomentKind, delta: f64) -> MomentFunction {
    MomentFunction {
        kind,
        delta,
        times: sk.grid.nodes()[1..].to_vec(),
        values: sk.averages(),
        cell_averaged: true,
    }
}

/// `ρ_{1,δ}`, `ρ_δ` or `σ` at the nodes by contour inversion, using
/// `σ̂ = Γ(1-τ) ĥ^(1-τ)`.
pub fn rho_sigma_talbot(k: &CreepKernel, gamma: f64, which: RhoSigma, grid: &TimeGrid) -> Result<MomentFunction> {
    if !k.has_laplace() {
        return Err(Error::Unsupported("closed-form transform of b required".into()));
    }
    let (kind, delta, c, p, over_lambda) = match which {
        RhoSigma::Rho1(d) => (MomentKind::Rho1, d, gamma_fn(1.0 - d), -d, true),
        RhoSigma::Rho(d) => (MomentKind::Rho, d, gamma_fn(1.0 - d), 1.0 - d, false),
        RhoSigma::Sigma(t) => {
            if !(-1.0..1.0).contains(&t) {
                return Err(Error::param("tau", format!("must lie in [-1, 1), got {t}")));
            }
            (MomentKind::Sigma, t, gamma_fn(1.0 - t), 1.0 - t, false)
        }
    };
    let times = grid.nodes()[1..].to_vec();
    let values = times
        .iter()
        .map(|&t| {
            talbot_invert(
                |z| {
                    let v = hhat_pow(k, gamma, z, p).unwrap() * c;
                    if over_lambda {
                        v / z
                    } else {
                        v
                    }
                },
                t,
                DEFAULT_NODES,
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MomentFunction {
        kind,
        delta,
        times,
        values,
        cell_averaged: false,
    })
}
