//! Decay exponents, hypothesis checks and numeric decay probes.
//!
//! Exponents are computed in exact rational arithmetic so that reports can
//! be compared by equality. Probes fit log-log slopes of `L^{p'}` norms on
//! the torus grid.

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::{evolve_linear_nodes, Fft3, SpectralField, TorusGrid};
use crate::multipliers::MultiplierTable;

pub type Rational = Ratio<i64>;

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

fn int(n: i64) -> Rational {
    Rational::from_integer(n)
}

/// Parses `"4/3"`, `"2"` or a finite decimal such as `"1.375"` exactly.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let t = text.trim();
    let bad = || Error::param("rational", format!("cannot parse {t:?}"));
    if let Some((a, b)) = t.split_once('/') {
        let n: i64 = a.trim().parse().map_err(|_| bad())?;
        let d: i64 = b.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(Error::param("rational", "zero denominator"));
        }
        return Ok(q(n, d));
    }
    if let Some((a, b)) = t.split_once('.') {
        if b.is_empty() || b.len() > 15 || !b.bytes().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let neg = a.starts_with('-');
        let whole: i64 = if a.is_empty() || a == "-" { 0 } else { a.parse().map_err(|_| bad())? };
        let frac: i64 = b.parse().map_err(|_| bad())?;
        let den = 10i64.pow(b.len() as u32);
        let mag = q(whole.abs() * den + frac, den);
        return Ok(if neg { -mag } else { mag });
    }
    t.parse::<i64>().map(int).map_err(|_| bad())
}

fn ser_rational<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

fn to_f64(r: Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// `0 < x < 1`
fn in_unit(x: Rational) -> bool {
    x.is_positive() && x < Rational::one()
}

/// Hypotheses on `(β, p, s)` and `(β, κ, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HypothesisFlags {
    pub h1: bool,
    pub h2: bool,
    pub h3: bool,
    pub h4: bool,
    pub h5: bool,
}

/// Which cases of the local existence theorem apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TheoremCases {
    /// `a0 = 0`, (H4), `b ∈ L^{p0}` with `p0 > q0(1-τ)/(1-q0τ)`, `0 < q0τ < 1`, `0 < qτ1 < 1`.
    pub i: bool,
    /// `a0 = 0`, (H5), `b ∈ L^{q0}`, `0 < qτ1 < 1`.
    pub ii: bool,
    /// `a0 > 0`, (H4), `0 < q0τ < 1`, `0 < qτ1 < 1`.
    pub iii: bool,
    /// `a0 > 0`, (H5), `0 < qτ1 < 1`.
    pub iv: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentReport {
    #[serde(serialize_with = "ser_rational")]
    pub beta: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub p: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub p_prime: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub s: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub kappa: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub q0: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub q: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub r: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub tau: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub tau1: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub q0_tau: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub q_tau1: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub s1_crit: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub s_crit: Rational,
    /// `p = 1 + 1/κ`, the pairing used by the existence theorem.
    pub p_matches_kappa: bool,
    pub hypotheses: HypothesisFlags,
}

impl ExponentReport {
    /// Lower bound on the integrability exponent of `b` required in case (i).
    pub fn case_i_threshold(&self) -> Option<Rational> {
        let den = Rational::one() - self.q0_tau;
        if den.is_positive() {
            Some(self.q0 * (Rational::one() - self.tau) / den)
        } else {
            None
        }
    }

    /// `1 + 1/q - 1/q0 - 1/r`, zero for every valid input.
    pub fn young_defect(&self) -> Rational {
        Rational::one() + self.q.recip() - self.q0.recip() - self.r.recip()
    }
}

/// `(6/β)(1/p - 1/p')`
fn spatial_index(beta: Rational, p: Rational) -> Rational {
    let pp = p / (p - Rational::one());
    int(6) / beta * (p.recip() - pp.recip())
}

pub fn tau(beta: Rational, p: Rational) -> Rational {
    spatial_index(beta, p) - Rational::one()
}

pub fn tau1(beta: Rational, p: Rational, s: Rational) -> Rational {
    spatial_index(beta, p) - int(2) * s / beta
}

/// `s` at which `τ1` vanishes.
pub fn s1_crit(p: Rational) -> Rational {
    int(3) * (int(2) / p - Rational::one())
}

pub fn s_crit(kappa: Rational) -> Rational {
    int(3) * (kappa - Rational::one()) / (kappa + Rational::one())
}

fn h1(beta: Rational, p: Rational, s: Rational) -> bool {
    let one = Rational::one();
    let three = int(3);
    if !(s.is_positive() && s < three) {
        return false;
    }
    let upper = int(6) / (three + s);
    let lower = if beta == int(2) {
        int(4) / (int(2) + s)
    } else {
        let half = beta / int(2);
        let s_ok = s < int(2) - half || (s >= three - half && s < three);
        if !s_ok {
            return false;
        }
        let a = int(12) - int(3) * beta;
        int(2) * a / (a + int(4) * s)
    };
    p > one && p <= upper && p >= lower
}

fn h2(beta: Rational, p: Rational) -> bool {
    if beta == int(2) {
        p >= q(4, 3) && p < q(3, 2)
    } else {
        let lo = int(2) * (int(12) - int(3) * beta) / (int(12) - beta);
        p >= lo && p < int(12) / (int(6) + beta)
    }
}

fn h3(beta: Rational, p: Rational) -> bool {
    let lo = if beta == int(2) { q(3, 2) } else { int(12) / (int(6) + beta) };
    p >= lo && p <= int(2)
}

/// (H4) when `closed_top` is false, (H5) when true.
fn h45(beta: Rational, kappa: Rational, s: Rational, closed_top: bool) -> bool {
    let one = Rational::one();
    let km = kappa - one;
    let kp = kappa + one;
    let s_hi = int(3) * km / kp;
    let top_ok = if closed_top { s <= s_hi } else { s < s_hi };
    if beta == int(2) {
        let k_ok = if closed_top {
            kappa > one && kappa <= int(2)
        } else {
            kappa > int(2) && kappa <= int(3)
        };
        k_ok && s >= int(2) * km / kp && top_ok
    } else {
        let mid = (int(6) + beta) / (int(6) - beta);
        let k_ok = if closed_top {
            kappa > one && kappa <= mid
        } else {
            kappa > mid && kappa <= (int(12) - beta) / (int(12) - int(5) * beta)
        };
        let s_lo = (int(12) - int(3) * beta) * km / (int(4) * kp);
        k_ok && s.is_positive() && s < int(2) - beta / int(2) && s >= s_lo && top_ok
    }
}

/// Exponents, critical indices and hypothesis flags for
/// `β ∈ (1,2]`, `p ∈ (1,2)`, `κ > 1`, `q0 ∈ (1,κ]`.
pub fn exponents(
    beta: Rational,
    p: Rational,
    s: Rational,
    kappa: Rational,
    q0: Rational,
) -> Result<ExponentReport> {
    let one = Rational::one();
    if !(beta > one && beta <= int(2)) {
        return Err(Error::param("beta", format!("{beta} outside (1, 2]")));
    }
    if !(p > one && p < int(2)) {
        return Err(Error::param("p", format!("{p} outside (1, 2)")));
    }
    if kappa <= one {
        return Err(Error::param("kappa", format!("{kappa} outside (1, ∞)")));
    }
    if !(q0 > one && q0 <= kappa) {
        return Err(Error::param("q0", format!("{q0} outside (1, κ] = (1, {kappa}]")));
    }
    let p_prime = p / (p - one);
    let tau_v = tau(beta, p);
    let tau1_v = tau1(beta, p, s);
    let qq = q0 * (kappa - one) / (q0 - one);
    let r = qq / kappa;
    Ok(ExponentReport {
        beta,
        p,
        p_prime,
        s,
        kappa,
        q0,
        q: qq,
        r,
        tau: tau_v,
        tau1: tau1_v,
        q0_tau: q0 * tau_v,
        q_tau1: qq * tau1_v,
        s1_crit: s1_crit(p),
        s_crit: s_crit(kappa),
        p_matches_kappa: p == one + kappa.recip(),
        hypotheses: HypothesisFlags {
            h1: h1(beta, p, s),
            h2: h2(beta, p),
            h3: h3(beta, p),
            h4: h45(beta, kappa, s, false),
            h5: h45(beta, kappa, s, true),
        },
    })
}

/// What the existence theorem needs to know about the kernel pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KernelTraits {
    pub a0_positive: bool,
    /// `b ∈ L^m_loc` for every `m` below this bound; `None` when `b` is
    /// locally bounded.
    #[serde(serialize_with = "ser_opt_rational")]
    pub b_integrability: Option<Rational>,
}

fn ser_opt_rational<S: Serializer>(r: &Option<Rational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(v) => s.serialize_str(&v.to_string()),
        None => s.serialize_none(),
    }
}

impl KernelTraits {
    pub fn heaviside() -> Self {
        KernelTraits {
            a0_positive: true,
            b_integrability: None,
        }
    }

    /// `b = g_α`, which lies in `L^m_loc` exactly for `m < 1/(1-α)`.
    pub fn fractional(alpha: Rational) -> Result<Self> {
        if !(alpha.is_positive() && alpha < Rational::one()) {
            return Err(Error::param("alpha", format!("{alpha} outside (0, 1)")));
        }
        Ok(KernelTraits {
            a0_positive: false,
            b_integrability: Some((Rational::one() - alpha).recip()),
        })
    }

    fn b_in(&self, m: Rational) -> bool {
        self.b_integrability.is_none_or(|bound| m < bound)
    }

    /// Some `m > threshold` with `b ∈ L^m_loc`.
    fn b_above(&self, threshold: Rational) -> bool {
        self.b_integrability.is_none_or(|bound| threshold < bound)
    }
}

/// Applicable cases of the local existence theorem; all require
/// `p = 1 + 1/κ`.
pub fn theorem_cases(rep: &ExponentReport, k: &KernelTraits) -> TheoremCases {
    let base = rep.p_matches_kappa;
    let qt1 = in_unit(rep.q_tau1);
    let q0t = in_unit(rep.q0_tau);
    let h = rep.hypotheses;
    let thr_ok = rep.case_i_threshold().is_some_and(|t| k.b_above(t));
    TheoremCases {
        i: base && !k.a0_positive && h.h4 && q0t && qt1 && thr_ok,
        ii: base && !k.a0_positive && h.h5 && qt1 && k.b_in(rep.q0),
        iii: base && k.a0_positive && h.h4 && q0t && qt1,
        iv: base && k.a0_positive && h.h5 && qt1,
    }
}

/// `[7 κ 2^{κ-1} M_T]^{-1/(κ-1)}`.
pub fn contraction_radius(m_t: f64, kappa: f64) -> Result<f64> {
    if !(m_t > 0.0 && m_t.is_finite()) {
        return Err(Error::param("M_T", "must be positive and finite"));
    }
    if !(kappa > 1.0) {
        return Err(Error::param("kappa", "must exceed 1"));
    }
    let c = kappa * (kappa - 1.0).exp2();
    Ok((7.0 * c * m_t).powf(-1.0 / (kappa - 1.0)))
}

/// Radius for the `L^∞_t` contraction with
/// `C_{κ,1} = 2^{κ-1} max(κ, (I K1)^κ, (I K1)^{κ-1})`:
/// `[7 C_{κ,1} K2 ||b||_{L¹(0,T/4)}^{1-τ}]^{-1/(κ-1)}`.
pub fn contraction_radius_uniform(kappa: f64, ik1: f64, k2: f64, b_l1: f64, tau: f64) -> Result<f64> {
    if !(kappa > 1.0) {
        return Err(Error::param("kappa", "must exceed 1"));
    }
    if !(ik1 > 0.0 && k2 > 0.0 && b_l1 > 0.0) {
        return Err(Error::param("constants", "must be positive"));
    }
    let c = (kappa - 1.0).exp2() * kappa.max(ik1.powf(kappa)).max(ik1.powf(kappa - 1.0));
    Ok((7.0 * c * k2 * b_l1.powf(1.0 - tau)).powf(-1.0 / (kappa - 1.0)))
}

/// Least-squares slope of `ln y` against `ln t`.
pub fn loglog_slope(t: &[f64], y: &[f64]) -> Result<f64> {
    if t.len() != y.len() || t.len() < 3 {
        return Err(Error::Fit("need at least three samples".into()));
    }
    if t.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Fit("log-log fit needs positive finite samples".into()));
    }
    let lx: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

fn check_window(window: (f64, f64)) -> Result<()> {
    let (a, b) = window;
    if !(a > 0.0 && b > a && b.is_finite()) {
        return Err(Error::Fit(format!("window [{a}, {b}] is not an interval in (0, ∞)")));
    }
    if b / a < 10.0 * (1.0 - 1e-9) {
        return Err(Error::Fit(format!("window [{a}, {b}] spans less than one decade")));
    }
    Ok(())
}

fn log_times(window: (f64, f64), samples: usize) -> Vec<f64> {
    let (a, b) = window;
    (0..samples)
        .map(|i| a * (b / a).powf(i as f64 / (samples - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub window: (f64, f64),
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub p_prime: f64,
    pub tau1: f64,
    pub predicted_slope: f64,
    pub fitted_slope: f64,
    pub gap: f64,
    /// `max norm(t) t^{τ1}` over the leading quarter of the window.
    pub domination_constant: f64,
    /// Share of samples with `norm(t) <= constant · t^{-τ1}`.
    pub domination_fraction: f64,
    /// `(max - min) / max` of the norms over the window.
    pub relative_variation: f64,
}

/// Samples `||C(t)u||_{L^{p'}}` at table nodes log-spaced over `window` and
/// compares the curve with the rate `t^{-τ1}`.
pub fn decay_probe(
    table: &MultiplierTable,
    u: &SpectralField,
    grid: &TorusGrid,
    p_prime: f64,
    window: (f64, f64),
    tau1: f64,
    samples: usize,
) -> Result<DecayReport> {
    check_window(window)?;
    if !(tau1 >= 0.0) {
        return Err(Error::param("tau1", format!("{tau1} is negative")));
    }
    if !(p_prime >= 1.0) {
        return Err(Error::param("p_prime", "must be at least 1"));
    }
    if samples < 3 {
        return Err(Error::param("samples", "need at least 3"));
    }
    let tg = &table.grid;
    if window.1 > tg.t_final() * (1.0 + 1e-12) {
        return Err(Error::Fit(format!("window end {} beyond the table horizon {}", window.1, tg.t_final())));
    }
    let nodes_all = tg.nodes();
    let mut nodes: Vec<usize> = log_times(window, samples)
        .iter()
        .map(|&t| {
            let i = nodes_all.partition_point(|&x| x < t).min(nodes_all.len() - 1);
            if i > 0 && (t - nodes_all[i - 1]) < (nodes_all[i] - t) {
                i - 1
            } else {
                i
            }
        })
        .filter(|&i| i > 0)
        .collect();
    nodes.dedup();
    let fft = Fft3::new(grid);
    let fields = evolve_linear_nodes(u, table, grid, &nodes)?;
    let norms: Vec<f64> = fields.par_iter().map(|f| f.lp_norm(grid, &fft, p_prime)).collect();
    let times: Vec<f64> = nodes.iter().map(|&n| nodes_all[n]).collect();
    let fitted = loglog_slope(&times, &norms)?;
    let lead = (times.len() / 4).max(1);
    let constant = times[..lead]
        .iter()
        .zip(&norms)
        .map(|(t, v)| v * t.powf(tau1))
        .fold(0.0, f64::max);
    let dominated = times
        .iter()
        .zip(&norms)
        .filter(|(t, v)| **v <= constant * t.powf(-tau1) * (1.0 + 1e-12))
        .count();
    let mx = norms.iter().cloned().fold(0.0, f64::max);
    let mn = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(DecayReport {
        window,
        p_prime,
        tau1,
        predicted_slope: -tau1,
        fitted_slope: fitted,
        gap: fitted + tau1,
        domination_constant: constant,
        domination_fraction: dominated as f64 / times.len() as f64,
        relative_variation: if mx > 0.0 { (mx - mn) / mx } else { 0.0 },
        times,
        norms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DispersiveKind {
    /// `|ξ|^{-s} e^{it|ξ|^{β/2}}`
    CosHs,
    /// `|ξ|^{-β/2} sin(t|ξ|^{β/2})`
    SinLp,
}

impl std::str::FromStr for DispersiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cos-hs" | "cos-Hs" => Ok(DispersiveKind::CosHs),
            "sin-lp" | "sin-Lp" => Ok(DispersiveKind::SinLp),
            other => Err(Error::param("kind", format!("unknown dispersive kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DispersiveReport {
    pub kind: DispersiveKind,
    pub window: (f64, f64),
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub predicted_slope: f64,
    pub fitted_slope: f64,
    pub gap: f64,
}

const EPS: f64 = 1e-12;

/// Conditions on `(β, p, s)` for the `|ξ|^{-s}` dispersive bound.
pub fn cos_hs_condition(beta: f64, p: f64, s: f64) -> std::result::Result<(), String> {
    if !(beta > 1.0 && beta <= 2.0) {
        return Err(format!("β = {beta} outside (1, 2]"));
    }
    if !(s > 0.0 && s < 3.0) {
        return Err(format!("s = {s} outside (0, 3)"));
    }
    let upper = 6.0 / (3.0 + s);
    let lower = if (beta - 2.0).abs() < EPS {
        4.0 / (2.0 + s)
    } else {
        let a = 12.0 - 3.0 * beta;
        2.0 * a / (a + 4.0 * s)
    };
    if !(p > 1.0 && p <= upper + EPS && p >= lower - EPS) {
        return Err(format!("p = {p} outside (1, {upper}] ∩ [{lower}, {upper}]"));
    }
    Ok(())
}

/// Conditions on `(β, p)` for the sine-multiplier `L^p` bound.
pub fn sin_lp_condition(beta: f64, p: f64) -> std::result::Result<(), String> {
    if !(beta > 1.0 && beta <= 2.0) {
        return Err(format!("β = {beta} outside (1, 2]"));
    }
    let lower = if (beta - 2.0).abs() < EPS {
        4.0 / 3.0
    } else {
        2.0 * (12.0 - 3.0 * beta) / (12.0 - beta)
    };
    if !(p >= lower - EPS && p <= 2.0 + EPS) {
        return Err(format!("p = {p} outside [{lower}, 2]"));
    }
    Ok(())
}

/// Predicted log-log slope of the dispersive bound.
pub fn dispersive_prediction(kind: DispersiveKind, beta: f64, p: f64, s: f64) -> f64 {
    let pp = p / (p - 1.0);
    let idx = 6.0 / beta * (1.0 / p - 1.0 / pp);
    match kind {
        DispersiveKind::CosHs => 2.0 * s / beta - idx,
        DispersiveKind::SinLp => 1.0 - idx,
    }
}

/// Fits the decay of `||F^{-1}(m(t,ξ) ũ)||_{L^{p'}}` for the dispersive
/// multipliers; the zero mode is dropped and `u` must have zero mean.
#[allow(clippy::too_many_arguments)]
pub fn dispersive_probe(
    s: f64,
    beta: f64,
    p: f64,
    u: &SpectralField,
    grid: &TorusGrid,
    window: (f64, f64),
    kind: DispersiveKind,
    samples: usize,
) -> Result<DispersiveReport> {
    let cond = match kind {
        DispersiveKind::CosHs => cos_hs_condition(beta, p, s),
        DispersiveKind::SinLp => sin_lp_condition(beta, p),
    };
    if let Err(why) = cond {
        return Err(Error::param("dispersive hypothesis", why));
    }
    check_window(window)?;
    if samples < 3 {
        return Err(Error::param("samples", "need at least 3"));
    }
    let scale = u.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if u.coeffs[0].norm() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::param("u", "data must have zero mean"));
    }
    let pp = p / (p - 1.0);
    let fft = Fft3::new(grid);
    let times = log_times(window, samples);
    let norms: Vec<f64> = times
        .par_iter()
        .map(|&t| {
            u.apply_radial(grid, |m| {
                if m == 0.0 {
                    return Complex64::zero();
                }
                let w = m.powf(0.5 * beta);
                match kind {
                    DispersiveKind::CosHs => Complex64::from_polar(m.powf(-s), t * w),
                    DispersiveKind::SinLp => Complex64::new((t * w).sin() / w, 0.0),
                }
            })
            .lp_norm(grid, &fft, pp)
        })
        .collect();
    let fitted = loglog_slope(&times, &norms)?;
    let predicted = dispersive_prediction(kind, beta, p, s);
    Ok(DispersiveReport {
        kind,
        window,
        times,
        norms,
        predicted_slope: predicted,
        fitted_slope: fitted,
        gap: fitted - predicted,
    })
}

/// Float view of a rational, for feeding probes.
pub fn approx(r: Rational) -> f64 {
    to_f64(r)
}
