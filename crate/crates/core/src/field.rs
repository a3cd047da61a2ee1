//! Fields on the periodic box `[0, L)^3`, linear evolution by the tabulated
//! symbols, and the Picard solver for the mild equation
//! `w(t) = C(t)u - ∫_0^t S(t - ζ) w|w|^(κ-1)(ζ) dζ`.
//!
//! Coefficients follow the Fourier-series convention
//! `u(x) = Σ_k û_k e^{i k·x}`, so `∫|u|² = L³ Σ|û_k|²`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::KernelFamily;
use crate::multipliers::{MultiplierTable, RowLookup};

/// Uniform lattice with `n` points per axis on `[0, L)^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TorusGrid {
    pub n: usize,
    pub box_length: f64,
    /// Zero coefficients with some `|k_i| >= n/3` after every nonlinear step.
    pub dealias: bool,
}

impl TorusGrid {
    pub fn new(n: usize, box_length: f64) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::param("n_per_axis", format!("must be even and at least 4, got {n}")));
        }
        if !(box_length > 0.0 && box_length.is_finite()) {
            return Err(Error::param("box_length", format!("must be positive, got {box_length}")));
        }
        Ok(TorusGrid { n, box_length, dealias: true })
    }

    pub fn with_dealias(mut self, on: bool) -> Self {
        self.dealias = on;
        self
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Signed integer wavenumber of index `i` along an axis.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    /// Integer wavenumber triple of a flat index.
    pub fn mode(&self, idx: usize) -> [i64; 3] {
        let n = self.n;
        [self.wavenumber(idx / (n * n)), self.wavenumber((idx / n) % n), self.wavenumber(idx % n)]
    }

    /// Flat index of an integer wavenumber triple.
    pub fn index_of(&self, k: [i64; 3]) -> usize {
        let n = self.n as i64;
        let w = |v: i64| v.rem_euclid(n) as usize;
        self.index(w(k[0]), w(k[1]), w(k[2]))
    }

    pub fn fundamental(&self) -> f64 {
        2.0 * PI / self.box_length
    }

    /// `|ξ|` of a flat index.
    pub fn magnitude(&self, idx: usize) -> f64 {
        let k = self.mode(idx);
        self.fundamental() * ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt()
    }

    /// Whether the mode survives the dealiasing mask.
    pub fn retained(&self, idx: usize) -> bool {
        if !self.dealias {
            return true;
        }
        let n = self.n as i64;
        self.mode(idx).iter().all(|&k| 3 * k.abs() < n)
    }

    /// Largest `|ξ|` over retained modes.
    pub fn max_magnitude(&self) -> f64 {
        let kmax = if self.dealias {
            let n = self.n as i64;
            (0..n).filter(|k| 3 * k < n).max().unwrap_or(0)
        } else {
            self.n as i64 / 2
        };
        self.fundamental() * (3.0f64).sqrt() * kmax as f64
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn describe(&self) -> String {
        format!("torus n={} L={} dealias={}", self.n, self.box_length, self.dealias)
    }
}

/// Distinct `|ξ|` over the retained lattice, ascending and starting at 0.
/// A table built on these magnitudes serves every mode without
/// interpolation.
pub fn lattice_magnitudes(grid: &TorusGrid) -> Vec<f64> {
    let mut keys: Vec<i64> = (0..grid.len())
        .filter(|&idx| grid.retained(idx))
        .map(|idx| {
            let k = grid.mode(idx);
            k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
        })
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter().map(|k| grid.fundamental() * (k as f64).sqrt()).collect()
}

/// Three-dimensional FFT by line passes.
#[derive(Clone)]
pub struct Fft3 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    pub fn new(grid: &TorusGrid) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 {
            n: grid.n,
            fwd: planner.plan_fft_forward(grid.n),
            inv: planner.plan_fft_inverse(grid.n),
        }
    }

    /// Unnormalised forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    /// Unnormalised inverse transform in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n);
        // last axis is contiguous
        plan.process(data);
        let mut lines = vec![Complex64::new(0.0, 0.0); n * n * n];
        // middle axis
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    lines[(i * n + k) * n + j] = data[(i * n + j) * n + k];
                }
            }
        }
        plan.process(&mut lines);
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    data[(i * n + j) * n + k] = lines[(i * n + k) * n + j];
                }
            }
        }
        // first axis
        for j in 0..n {
            for k in 0..n {
                for i in 0..n {
                    lines[(j * n + k) * n + i] = data[(i * n + j) * n + k];
                }
            }
        }
        plan.process(&mut lines);
        for j in 0..n {
            for k in 0..n {
                for i in 0..n {
                    data[(i * n + j) * n + k] = lines[(j * n + k) * n + i];
                }
            }
        }
    }
}

/// Fourier coefficients over the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        SpectralField {
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_coeffs(grid: &TorusGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::param(
                "coeffs",
                format!("expected {} coefficients, got {}", grid.len(), coeffs.len()),
            ));
        }
        Ok(SpectralField { coeffs })
    }

    /// Coefficients of a field given by its values on the lattice.
    pub fn from_physical(grid: &TorusGrid, fft: &Fft3, values: &[Complex64]) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::param("values", "length must be n^3"));
        }
        let mut c = values.to_vec();
        fft.forward(&mut c);
        let scale = 1.0 / grid.len() as f64;
        c.iter_mut().for_each(|v| *v *= scale);
        Ok(SpectralField { coeffs: c })
    }

    /// Samples the real function `f(x, y, z)` on the lattice.
    pub fn from_fn(grid: &TorusGrid, fft: &Fft3, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let n = grid.n;
        let h = grid.spacing();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    values.push(Complex64::new(f(i as f64 * h, j as f64 * h, k as f64 * h), 0.0));
                }
            }
        }
        Self::from_physical(grid, fft, &values).expect("length matches")
    }

    /// `amp · e^{i k·x}`.
    pub fn single_mode(grid: &TorusGrid, k: [i64; 3], amp: Complex64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[grid.index_of(k)] = amp;
        f
    }

    /// `amp · cos(k·x)`, a real field.
    pub fn cosine_mode(grid: &TorusGrid, k: [i64; 3], amp: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[grid.index_of(k)] += Complex64::new(0.5 * amp, 0.0);
        f.coeffs[grid.index_of([-k[0], -k[1], -k[2]])] += Complex64::new(0.5 * amp, 0.0);
        f
    }

    pub fn to_physical(&self, fft: &Fft3) -> Vec<Complex64> {
        let mut v = self.coeffs.clone();
        fft.inverse(&mut v);
        v
    }

    /// `L²` norm by Parseval.
    pub fn l2_norm(&self, grid: &TorusGrid) -> f64 {
        let s: f64 = self.coeffs.iter().map(|c| c.norm_sqr()).sum();
        (grid.box_length.powi(3) * s).sqrt()
    }

    /// `L^p` norm by a Riemann sum over the lattice; `p = ∞` gives the max.
    pub fn lp_norm(&self, grid: &TorusGrid, fft: &Fft3, p: f64) -> f64 {
        lp_of_values(&self.to_physical(fft), grid, p)
    }

    /// Largest violation of `û(-k) = conj(û(k))`.
    pub fn hermitian_defect(&self, grid: &TorusGrid) -> f64 {
        (0..grid.len())
            .map(|idx| {
                let k = grid.mode(idx);
                let m = grid.index_of([-k[0], -k[1], -k[2]]);
                (self.coeffs[m] - self.coeffs[idx].conj()).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, a: f64) -> Self {
        SpectralField {
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }

    pub fn add(&self, other: &SpectralField) -> Self {
        SpectralField {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    /// Multiplies every coefficient by `m(|ξ|)`.
    pub fn apply_radial(&self, grid: &TorusGrid, m: impl Fn(f64) -> Complex64) -> Self {
        SpectralField {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(idx, c)| c * m(grid.magnitude(idx)))
                .collect(),
        }
    }

    /// Zeroes the modes removed by dealiasing.
    pub fn dealiased(mut self, grid: &TorusGrid) -> Self {
        for (idx, c) in self.coeffs.iter_mut().enumerate() {
            if !grid.retained(idx) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        self
    }
}

fn lp_of_values(values: &[Complex64], grid: &TorusGrid, p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    }
    let s: f64 = values.iter().map(|v| v.norm().powf(p)).sum();
    (s * grid.cell_volume()).powf(1.0 / p)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryMeta {
    pub kappa: Option<f64>,
    pub gamma: f64,
    pub beta: f64,
    pub family: KernelFamily,
    pub seed: Option<u64>,
}

/// Fields at every node of the table's time grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<SpectralField>,
    pub meta: TrajectoryMeta,
}

/// Modes grouped by `|k|²` with their table lookups.
struct Shells {
    of_mode: Vec<Option<usize>>,
    lookups: Vec<RowLookup>,
}

impl Shells {
    fn new(grid: &TorusGrid, table: &MultiplierTable) -> Result<Self> {
        let mut keys: BTreeMap<i64, usize> = BTreeMap::new();
        let mut of_mode = vec![None; grid.len()];
        for (idx, slot) in of_mode.iter_mut().enumerate() {
            if !grid.retained(idx) {
                continue;
            }
            let k = grid.mode(idx);
            let key = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            let next = keys.len();
            *slot = Some(*keys.entry(key).or_insert(next));
        }
        let mut lookups = vec![RowLookup { lo: 0, hi: 0, weight: 0.0 }; keys.len()];
        for (&key, &s) in &keys {
            let mag = grid.fundamental() * (key as f64).sqrt();
            lookups[s] = table.lookup(mag).map_err(|_| {
                Error::Range(format!(
                    "lattice magnitude {mag:.4} exceeds the table maximum {:.4}; rebuild the table",
                    table.max_magnitude()
                ))
            })?;
        }
        Ok(Shells { of_mode, lookups })
    }
}

fn meta(table: &MultiplierTable, kappa: Option<f64>) -> TrajectoryMeta {
    TrajectoryMeta {
        kappa,
        gamma: table.gamma,
        beta: table.beta,
        family: table.family,
        seed: None,
    }
}

/// `C(t_n) u` at every node.
pub fn evolve_linear(u: &SpectralField, table: &MultiplierTable, grid: &TorusGrid) -> Result<Trajectory> {
    let nodes: Vec<usize> = (0..=table.grid.cells()).collect();
    Ok(Trajectory {
        times: table.grid.nodes().to_vec(),
        fields: evolve_linear_nodes(u, table, grid, &nodes)?,
        meta: meta(table, None),
    })
}

/// `C(t_n) u` at the listed nodes only.
pub fn evolve_linear_nodes(
    u: &SpectralField,
    table: &MultiplierTable,
    grid: &TorusGrid,
    nodes: &[usize],
) -> Result<Vec<SpectralField>> {
    if let Some(&n) = nodes.iter().find(|&&n| n > table.grid.cells()) {
        return Err(Error::Range(format!("node {n} beyond the table grid")));
    }
    let shells = Shells::new(grid, table)?;
    Ok(nodes
        .iter()
        .map(|&n| {
            let coeffs = u
                .coeffs
                .iter()
                .enumerate()
                .map(|(idx, c)| match shells.of_mode[idx] {
                    Some(s) => c * table.c_at(shells.lookups[s], n),
                    None => Complex64::new(0.0, 0.0),
                })
                .collect();
            SpectralField { coeffs }
        })
        .collect())
}

/// Starting iterate of the Picard scheme for the correction `v = w - C(t)u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PicardStart {
    #[default]
    Zero,
    /// `v⁰ = C(t)u`.
    Linear,
}

#[derive(Debug, Clone, Copy)]
pub struct MildOptions {
    pub kappa: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub start: PicardStart,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    /// `sup_n ||v^{k+1}(t_n) - v^k(t_n)||_{L²}` per iteration.
    pub increments: Vec<f64>,
    /// Largest ratio of successive increments above round-off.
    pub contraction_factor: Option<f64>,
    /// `sup_n ||Φ(v)(t_n) - v(t_n)||_{L²}` for the returned iterate.
    pub residual: f64,
    /// Largest imaginary part of the physical field seen in the last sweep.
    pub max_imag: f64,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct MildSolution {
    /// `w = C(t)u + v`.
    pub trajectory: Trajectory,
    /// The correction `v`.
    pub correction: Vec<SpectralField>,
    pub report: ConvergenceReport,
}

struct Duhamel<'a> {
    grid: &'a TorusGrid,
    fft: Fft3,
    shells: Shells,
    /// `s[shell][lag - 1]`: cell integrals of `S` on the shell.
    s: Vec<Vec<f64>>,
    kappa: f64,
}

impl Duhamel<'_> {
    /// Nonlinearity `w|w|^(κ-1)` in coefficient space at each node, and the
    /// largest imaginary part of `w`.
    fn nonlinearity(&self, w: &[SpectralField]) -> Result<(Vec<SpectralField>, f64)> {
        let k1 = self.kappa - 1.0;
        let out: Vec<(SpectralField, f64)> = w
            .par_iter()
            .map(|f| {
                let mut phys = f.to_physical(&self.fft);
                let mut imag = 0.0f64;
                for v in phys.iter_mut() {
                    imag = imag.max(v.im.abs());
                    let r = v.re;
                    *v = Complex64::new(r * r.abs().powf(k1), 0.0);
                }
                let g = SpectralField::from_physical(self.grid, &self.fft, &phys).expect("length matches");
                (g.dealiased(self.grid), imag)
            })
            .collect();
        let mut imag = 0.0f64;
        let mut g = Vec::with_capacity(out.len());
        for (f, i) in out {
            if f.coeffs.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
                return Err(Error::NonFinite("nonlinearity overflowed during the Picard sweep".into()));
            }
            imag = imag.max(i);
            g.push(f);
        }
        Ok((g, imag))
    }

    /// `v_n = -Σ_{m=1}^{n} S(cell n-m+1) ĝ(t_{m-1})`.
    fn integrate(&self, g: &[SpectralField]) -> Vec<SpectralField> {
        let nodes = g.len();
        let len = self.grid.len();
        let per_mode: Vec<Vec<Complex64>> = (0..len)
            .into_par_iter()
            .map(|idx| {
                let mut v = vec![Complex64::new(0.0, 0.0); nodes];
                let Some(sh) = self.shells.of_mode[idx] else {
                    return v;
                };
                let gm: Vec<Complex64> = g.iter().map(|f| f.coeffs[idx]).collect();
                if gm.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
                    return v;
                }
                let s = &self.s[sh];
                for n in 1..nodes {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for m in 1..=n {
                        acc += gm[m - 1] * s[n - m];
                    }
                    v[n] = -acc;
                }
                v
            })
            .collect();
        (0..nodes)
            .map(|n| SpectralField {
                coeffs: per_mode.iter().map(|v| v[n]).collect(),
            })
            .collect()
    }

    fn apply(&self, wlin: &[SpectralField], v: &[SpectralField]) -> Result<(Vec<SpectralField>, f64)> {
        let w: Vec<SpectralField> = wlin.iter().zip(v).map(|(a, b)| a.add(b)).collect();
        let (g, imag) = self.nonlinearity(&w)?;
        Ok((self.integrate(&g), imag))
    }
}

/// `sup_n ||a_n - b_n||_{L²}`.
pub fn sup_distance(a: &[SpectralField], b: &[SpectralField], grid: &TorusGrid) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let s: f64 = x.coeffs.iter().zip(&y.coeffs).map(|(p, q)| (p - q).norm_sqr()).sum();
            (grid.box_length.powi(3) * s).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Picard iteration for the mild equation with data `u`.
///
/// Non-convergence within `max_iter` is reported, not raised; a non-finite
/// iterate aborts with an error.
pub fn solve_mild(
    u: &SpectralField,
    table: &MultiplierTable,
    grid: &TorusGrid,
    opts: MildOptions,
) -> Result<MildSolution> {
    if !(opts.kappa > 1.0 && opts.kappa.is_finite()) {
        return Err(Error::param("kappa", format!("must exceed 1, got {}", opts.kappa)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    if opts.max_iter == 0 {
        return Err(Error::param("max_iter", "must be at least 1"));
    }
    if u.coeffs.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(Error::param("u", "coefficients must be finite"));
    }
    let lin = evolve_linear(u, table, grid)?;
    let shells = Shells::new(grid, table)?;
    let cells = table.grid.cells();
    let s = shells
        .lookups
        .iter()
        .map(|&l| (1..=cells).map(|n| table.s_at(l, n)).collect())
        .collect();
    let op = Duhamel {
        grid,
        fft: Fft3::new(grid),
        shells,
        s,
        kappa: opts.kappa,
    };

    let mut v: Vec<SpectralField> = match opts.start {
        PicardStart::Zero => vec![SpectralField::zeros(grid); cells + 1],
        PicardStart::Linear => lin.fields.clone(),
    };
    let mut increments = Vec::new();
    let mut converged = false;
    let mut max_imag = 0.0;
    for _ in 0..opts.max_iter {
        let (next, imag) = op.apply(&lin.fields, &v)?;
        max_imag = imag;
        let inc = sup_distance(&next, &v, grid);
        if !inc.is_finite() {
            return Err(Error::NonFinite("Picard increment".into()));
        }
        increments.push(inc);
        v = next;
        if inc < opts.tol {
            converged = true;
            break;
        }
    }
    let (check, imag) = op.apply(&lin.fields, &v)?;
    max_imag = f64::max(max_imag, imag);
    let residual = sup_distance(&check, &v, grid);

    let scale = v.iter().map(|f| f.l2_norm(grid)).fold(0.0, f64::max).max(1e-300);
    let contraction_factor = increments
        .windows(2)
        .filter(|w| w[0] > 0.0 && w[1] > 1e-13 * scale)
        .map(|w| w[1] / w[0])
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));

    let fields = lin.fields.iter().zip(&v).map(|(a, b)| a.add(b)).collect();
    Ok(MildSolution {
        trajectory: Trajectory {
            times: lin.times,
            fields,
            meta: meta(table, Some(opts.kappa)),
        },
        correction: v,
        report: ConvergenceReport {
            converged,
            iterations: increments.len(),
            increments,
            contraction_factor,
            residual,
            max_imag,
            tol: opts.tol,
        },
    })
}

/// `||f||_{L^q([0,T]; L^p)}` with a Riemann sum in space and the trapezoid
/// rule in time; infinite exponents take maxima.
pub fn mixed_norm(traj: &Trajectory, grid: &TorusGrid, q: f64, p: f64) -> Result<f64> {
    if traj.fields.is_empty() {
        return Err(Error::param("trajectory", "must contain at least one field"));
    }
    if !(q >= 1.0 && p >= 1.0) {
        return Err(Error::param("q, p", "exponents must be at least 1"));
    }
    let fft = Fft3::new(grid);
    let inner = lp_series(traj, grid, &fft, p);
    if q.is_infinite() {
        return Ok(inner.iter().cloned().fold(0.0, f64::max));
    }
    let t = &traj.times;
    let mut acc = 0.0;
    for n in 1..t.len() {
        acc += 0.5 * (t[n] - t[n - 1]) * (inner[n].powf(q) + inner[n - 1].powf(q));
    }
    Ok(acc.powf(1.0 / q))
}

/// `||f(t_n)||_{L^p}` at every node.
pub fn lp_series(traj: &Trajectory, grid: &TorusGrid, fft: &Fft3, p: f64) -> Vec<f64> {
    traj.fields.par_iter().map(|f| f.lp_norm(grid, fft, p)).collect()
}
