use serde_json::{json, Value};

use telegraph_core::estimates::{
    self, approx, decay_probe, Rational, dispersive_probe, theorem_cases, DispersiveKind, ExponentReport,
};
use telegraph_core::field::{
    lattice_magnitudes, lp_series, mixed_norm, solve_mild, Fft3, MildOptions,
};
use telegraph_core::kernel::{verify_pc_star, KernelFamily};
use telegraph_core::multipliers::{build_multipliers, oracle_damped_wave, MultiplierTable};
use telegraph_core::randomizer::{lp_decompose, mc_tail_blocks, EvolvedBlocks, CUTOFF_PROFILE};
use telegraph_core::subordination::{convolution_residual, subordinate_kernel};
use telegraph_core::volterra::{kernel_weights, solve_relaxation};

use crate::config::{ExperimentConfig, Setup};
use crate::output::Artifacts;
use crate::CliError;

pub struct Outcome {
    pub pass: bool,
    pub summary: Value,
}

fn ok(summary: Value) -> Result<Outcome, CliError> {
    Ok(Outcome { pass: true, summary })
}

pub fn grids_meta(s: &Setup) -> Value {
    json!({
        "time": s.time.describe(),
        "torus": s.torus.describe(),
        "kernel": s.kernel.family.to_string(),
    })
}

fn report(s: &Setup) -> Result<ExponentReport, CliError> {
    Ok(estimates::exponents(s.beta, s.p, s.s, s.kappa, s.q0)?)
}

fn table(cfg: &ExperimentConfig, s: &Setup) -> Result<MultiplierTable, CliError> {
    Ok(build_multipliers(
        &s.kernel,
        cfg.model.gamma,
        approx(s.beta),
        &lattice_magnitudes(&s.torus),
        &s.time,
    )?)
}

fn p_prime(s: &Setup) -> f64 {
    approx(s.p / (s.p - Rational::from_integer(1)))
}

pub fn kernel_check(_cfg: &ExperimentConfig, s: &Setup, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let rep = verify_pc_star(&s.kernel, &s.time, None)?;
    let rows: Vec<Vec<f64>> = s.time.nodes()[1..]
        .iter()
        .zip(&rep.residuals)
        .map(|(&t, &r)| vec![t, r])
        .collect();
    art.csv("pc_star_residuals.csv", &["t", "residual"], &rows)?;
    let summary = json!({
        "pass": rep.pass,
        "max_residual": rep.max_residual,
        "worst_node": rep.worst_node,
        "tol": rep.tol,
        "rule": rep.rule,
    });
    art.json("kernel_check.json", &summary)?;
    Ok(Outcome { pass: rep.pass, summary })
}

pub fn relax(cfg: &ExperimentConfig, s: &Setup, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let gamma = cfg.model.gamma;
    let w = kernel_weights(&s.kernel.b, &s.time)?;
    let pair = solve_relaxation::<f64>(&w, gamma)?;
    let nodes = s.time.nodes();
    let rows: Vec<Vec<f64>> = (0..nodes.len())
        .map(|n| vec![nodes[n], pair.s[n], pair.r_primitive[n]])
        .collect();
    art.csv("relaxation.csv", &["t", "s_gamma", "one_star_r_gamma"], &rows)?;
    let defect = (0..nodes.len())
        .map(|n| (pair.s[n] - (1.0 - gamma * pair.r_primitive[n])).abs())
        .fold(0.0, f64::max);
    let summary = json!({
        "gamma": gamma,
        "l": "b",
        "rule": format!("{:?}", pair.rule),
        "identity_defect": defect,
        "s_at_t_final": pair.s[nodes.len() - 1],
    });
    art.json("relaxation.json", &summary)?;
    ok(summary)
}

pub fn subkernel(cfg: &ExperimentConfig, s: &Setup, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let sk = subordinate_kernel(&s.kernel, cfg.model.gamma, &s.time)?;
    let nodes = s.time.nodes();
    let rows: Vec<Vec<f64>> = sk
        .h
        .iter()
        .zip(sk.averages())
        .enumerate()
        .map(|(i, (&h, avg))| vec![nodes[i], nodes[i + 1], h, avg])
        .collect();
    art.csv("subkernel.csv", &["t_left", "t_right", "cell_integral", "average"], &rows)?;
    let res = convolution_residual(&sk)?;
    let rrows: Vec<Vec<f64>> = (0..res.times.len())
        .map(|n| vec![res.times[n], res.hh[n], res.br[n]])
        .collect();
    art.csv("subkernel_residual.csv", &["t", "one_h_h", "one_b_r"], &rrows)?;
    let summary = json!({
        "source": sk.source,
        "warnings": sk.warnings,
        "residual_max_abs": res.max_abs,
    });
    art.json("subkernel.json", &summary)?;
    ok(summary)
}

pub fn multipliers(cfg: &ExperimentConfig, s: &Setup, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let tab = table(cfg, s)?;
    let summary = table_summary(cfg, s, &tab)?;
    let nodes = s.time.nodes();
    let mut rows = Vec::with_capacity(tab.xi_mags.len() * nodes.len());
    for (m, &xi) in tab.xi_mags.iter().enumerate() {
        for (n, &t) in nodes.iter().enumerate() {
            rows.push(vec![xi, t, tab.c[m][n]]);
        }
    }
    art.csv("multipliers.csv", &["xi", "t", "C"], &rows)?;
    art.json("multipliers.json", &summary)?;
    ok(summary)
}

fn table_summary(cfg: &ExperimentConfig, s: &Setup, tab: &MultiplierTable) -> Result<Value, CliError> {
    let mut residual = 0.0f64;
    for m in 0..tab.xi_mags.len() {
        residual = residual.max(tab.c_residual(m)?);
    }
    let oracle = if matches!(s.kernel.family, KernelFamily::Heaviside) && s.beta == 2.into() {
        let nodes = s.time.nodes();
        let mut e = 0.0f64;
        for (m, &xi) in tab.xi_mags.iter().enumerate() {
            for (n, &t) in nodes.iter().enumerate() {
                e = e.max((tab.c[m][n] - oracle_damped_wave(cfg.model.gamma, xi, t)).abs());
            }
        }
        Some(e)
    } else {
        None
    };
    Ok(json!({
        "magnitudes": tab.xi_mags.len(),
        "sup_abs_c": tab.sup_c(),
        "equation_residual": residual,
        "damped_wave_error": oracle,
    }))
}

fn solve_inner(cfg: &ExperimentConfig, s: &Setup, art: &mut Artifacts, tab: &MultiplierTable) -> Result<Outcome, CliError> {
    let fft = Fft3::new(&s.torus);
    let u = cfg.datum(&s.torus, &fft);
    let opts = MildOptions {
        kappa: approx(s.kappa),
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        start: s.start,
    };
    let sol = solve_mild(&u, tab, &s.torus, opts)?;
    let pp = p_prime(s);
    let q = approx(report(s)?.q);
    let w_norms = lp_series(&sol.trajectory, &s.torus, &fft, pp);
    let rows: Vec<Vec<f64>> = sol
        .trajectory
        .times
        .iter()
        .zip(&w_norms)
        .zip(&sol.correction)
        .map(|((&t, &w), v)| vec![t, w, v.l2_norm(&s.torus)])
        .collect();
    art.csv("solve_norms.csv", &["t", "w_lp_prime", "v_l2"], &rows)?;
    let summary = json!({
        "report": sol.report,
        "q": q,
        "p_prime": pp,
        "mixed_norm_w": mixed_norm(&sol.trajectory, &s.torus, q, pp)?,
        "data_l2": u.l2_norm(&s.torus),
    });
    art.json("solve.json", &summary)?;
    Ok(Outcome {
        pass: sol.report.converged,
        summary,
    })
}

pub fn solve(cfg: &ExperimentConfig, s: &Setup, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let tab = table(cfg, s)?;
    solve_inner(cfg, s, art, &tab)
}

fn tail_inner(cfg: &ExperimentConfig, s: &Setup, art: &mut Artifacts, tab: &MultiplierTable) -> Result<Outcome, CliError> {
    let fft = Fft3::new(&s.torus);
    let u = cfg.datum(&s.torus, &fft);
    let d = lp_decompose(&u, &s.torus);
    let rc = &cfg.randomization;
    let cells = s.time.cells();
    let k = rc.time_nodes.min(cells + 1);
    let mut nodes: Vec<usize> = (0..k).map(|i| i * cells / (k - 1)).collect();
    nodes.dedup();
    let blocks = EvolvedBlocks::new(&d, tab, &s.torus, &nodes)?;
    let q = approx(report(s)?.q);
    let pp = p_prime(s);
    let (rep, _) = mc_tail_blocks(
        d.len(),
        s.law,
        |x| blocks.mixed_norm(x, q, pp),
        rc.thresholds.as_deref(),
        rc.samples,
        rc.seed,
    )?;
    let rows: Vec<Vec<f64>> = rep
        .curve
        .iter()
        .map(|c| vec![c.threshold, c.probability, c.ci_low, c.ci_high])
        .collect();
    art.csv("tail.csv", &["threshold", "probability", "ci_low", "ci_high"], &rows)?;
    let summary = json!({
        "functional": format!("L^{q} L^{pp} norm of the linear evolution"),
        "law": s.law,
        "iota": s.law.iota(),
        "seed": rc.seed,
        "samples": rep.samples,
        "cutoff_profile": CUTOFF_PROFILE,
        "block_norms": d.block_norms(&s.torus),
        "data_l2": u.l2_norm(&s.torus),
        "fit": rep.fit,
        "warnings": rep.warnings,
    });
    art.json("tail_fit.json", &summary)?;
    ok(summary)
}

pub fn randomize_mc(cfg: &ExperimentConfig, s: &Setup, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let tab = table(cfg, s)?;
    tail_inner(cfg, s, art, &tab)
}

fn window(cfg: &ExperimentConfig, t_final: f64) -> (f64, f64) {
    match cfg.probe.window {
        Some([a, b]) => (a, b),
        None => (t_final / 10.0, t_final),
    }
}

pub fn probe_decay(cfg: &ExperimentConfig, s: &Setup, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let rep = report(s)?;
    let tau1 = approx(rep.tau1);
    let tab = table(cfg, s)?;
    let fft = Fft3::new(&s.torus);
    let u = cfg.datum(&s.torus, &fft);
    let win = window(cfg, s.time.t_final());
    let probe = decay_probe(&tab, &u, &s.torus, p_prime(s), win, tau1, cfg.probe.samples)?;
    let rows: Vec<Vec<f64>> = probe
        .times
        .iter()
        .zip(&probe.norms)
        .map(|(&t, &v)| vec![t, v, probe.domination_constant * t.powf(-tau1)])
        .collect();
    art.csv("decay.csv", &["t", "norm", "bound"], &rows)?;
    let pass = if rep.tau1 == 0.into() {
        probe.relative_variation < 0.1
    } else {
        probe.domination_fraction >= 0.95
    };
    let summary = json!({ "pass": pass, "probe": probe_summary(&probe) });
    art.json("decay.json", &summary)?;
    Ok(Outcome { pass, summary })
}

fn probe_summary(p: &estimates::DecayReport) -> Value {
    json!({
        "window": p.window,
        "p_prime": p.p_prime,
        "predicted_slope": p.predicted_slope,
        "fitted_slope": p.fitted_slope,
        "gap": p.gap,
        "domination_constant": p.domination_constant,
        "domination_fraction": p.domination_fraction,
        "relative_variation": p.relative_variation,
    })
}

pub fn probe_dispersive(cfg: &ExperimentConfig, s: &Setup, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let kind: DispersiveKind = cfg.probe.kind.parse()?;
    let fft = Fft3::new(&s.torus);
    let u = cfg.datum(&s.torus, &fft);
    let win = window(cfg, s.time.t_final());
    let rep = dispersive_probe(approx(s.s), approx(s.beta), approx(s.p), &u, &s.torus, win, kind, cfg.probe.samples)?;
    let rows: Vec<Vec<f64>> = rep.times.iter().zip(&rep.norms).map(|(&t, &v)| vec![t, v]).collect();
    art.csv("dispersive.csv", &["t", "norm"], &rows)?;
    let pass = match kind {
        DispersiveKind::CosHs => rep.gap.abs() <= 0.15,
        // the sine bound is one-sided
        DispersiveKind::SinLp => rep.gap <= 0.15,
    };
    let summary = json!({
        "pass": pass,
        "kind": rep.kind,
        "window": rep.window,
        "predicted_slope": rep.predicted_slope,
        "fitted_slope": rep.fitted_slope,
        "gap": rep.gap,
    });
    art.json("dispersive.json", &summary)?;
    Ok(Outcome { pass, summary })
}

fn exponent_summary(s: &Setup) -> Result<Value, CliError> {
    let rep = report(s)?;
    let cases = s.traits.as_ref().map(|t| theorem_cases(&rep, t));
    Ok(json!({
        "report": rep,
        "kernel_traits": s.traits,
        "theorem_cases": cases,
        "case_i_threshold": rep.case_i_threshold().map(|r| r.to_string()),
    }))
}

pub fn exponents(_cfg: &ExperimentConfig, s: &Setup, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let summary = exponent_summary(s)?;
    art.json("exponents.json", &summary)?;
    ok(summary)
}

/// Exponent report, multiplier validation, a small solve and a tail curve.
pub fn reproduce(cfg: &ExperimentConfig, s: &Setup, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let ex = exponent_summary(s)?;
    art.json("exponents.json", &ex)?;
    let tab = table(cfg, s)?;
    let tsum = table_summary(cfg, s, &tab)?;
    art.json("multipliers.json", &tsum)?;
    let solve = solve_inner(cfg, s, art, &tab)?;
    let tail = tail_inner(cfg, s, art, &tab)?;
    Ok(Outcome {
        pass: solve.pass,
        summary: json!({
            "exponents": ex["report"],
            "theorem_cases": ex["theorem_cases"],
            "multipliers": tsum,
            "solve_converged": solve.pass,
            "tail_fit": tail.summary["fit"],
        }),
    })
}
