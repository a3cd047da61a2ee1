use num_complex::Complex64;
use statrs::function::gamma::gamma;
use telegraph_core::kernel::{CreepKernel, Kernel};
use telegraph_core::moments::{moment, moment_talbot, rho_sigma_from, rho_sigma_talbot, MomentKind, RhoSigma};
use telegraph_core::multipliers::{composite_weights, composite_weights_time_domain};
use telegraph_core::subordination::{
    convolution_residual, general_subordinate_value, m_limits, subordinate_bound_constant, subordinate_kernel,
    subordinate_kernel_with, subordinate_value, SubordinationMethod, SubordinationSource,
};
use telegraph_core::talbot::{talbot_invert, DEFAULT_NODES};
use telegraph_core::volterra::{kernel_weights, solve_relaxation};
use telegraph_core::TimeGrid;

fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

/// Heaviside, coupling γ: `h(t) = e^{-γt/2} I₀(γt/2)`.
fn heaviside_h(gamma_: f64, t: f64) -> f64 {
    (-0.5 * gamma_ * t).exp() * bessel_i0(0.5 * gamma_ * t)
}

/// `E_{a,b}(z)` by its power series.
fn mittag_leffler(a: f64, b: f64, z: f64) -> f64 {
    let mut sum = 0.0;
    let mut zk = 1.0;
    for k in 0..400 {
        let term = zk / gamma(a * k as f64 + b);
        sum += term;
        if k > 20 && term.abs() < 1e-17 * sum.abs().max(1.0) {
            break;
        }
        zk *= z;
    }
    sum
}

fn fractional_k1(alpha: f64, gamma_: f64, t: f64) -> f64 {
    t.powf(2.0 * alpha) * mittag_leffler(alpha, 2.0 * alpha + 1.0, -gamma_ * t.powf(alpha))
}

#[test]
fn contour_inversion_examples() {
    let one = talbot_invert(|z| z.inv(), 1.0, DEFAULT_NODES).unwrap();
    assert!((one - 1.0).abs() < 1e-8);
    let v = talbot_invert(|z| z.powf(-0.5), 1.0, DEFAULT_NODES).unwrap();
    let e = 1.0 / std::f64::consts::PI.sqrt();
    assert!((v - e).abs() / e < 1e-8, "{v}");
    let v = talbot_invert(|z| (z.sqrt() * (z + 1.0).sqrt()).inv(), 2.0, DEFAULT_NODES).unwrap();
    let e = (-1.0f64).exp() * bessel_i0(1.0);
    assert!((v - e).abs() / e < 1e-8, "{v} {e}");
}

#[test]
fn heaviside_kernel_matches_bessel_oracle() {
    let k = CreepKernel::heaviside();
    let mut worst = 0.0f64;
    for i in 0..=200 {
        let t = 0.1 * (100.0f64).powf(i as f64 / 200.0);
        let e = heaviside_h(1.0, t);
        worst = worst.max((subordinate_value(&k, 1.0, t).unwrap() - e).abs() / e);
    }
    assert!(worst <= 1e-4, "{worst:e}");

    // cell integrals on a grid reaching t = 10
    let g = TimeGrid::uniform(10.0, 100).unwrap();
    let sk = subordinate_kernel(&k, 1.0, &g).unwrap();
    assert_eq!(sk.source, SubordinationSource::Talbot);
    for n in 1..=g.cells() {
        let (a, b) = (g.node(n - 1), g.node(n));
        let q = telegraph_core::quad::integrate(|t| heaviside_h(1.0, t), a, b, 1e-13).value;
        assert!((sk.h[n - 1] - q).abs() / q < 1e-6, "cell {n}");
    }
}

#[test]
fn zero_coupling_heaviside_gives_unit_density() {
    let g = TimeGrid::uniform(2.0, 40).unwrap();
    for method in [SubordinationMethod::Talbot, SubordinationMethod::ConvSqrt] {
        let sk = subordinate_kernel_with(&CreepKernel::heaviside(), 0.0, &g, method).unwrap();
        for a in sk.averages() {
            assert!((a - 1.0).abs() < 1e-6, "{method:?} {a}");
        }
    }
}

#[test]
fn square_convolution_residual_for_builtins() {
    let g = TimeGrid::uniform(2.0, 64).unwrap();
    for k in [CreepKernel::heaviside(), CreepKernel::fractional(0.5).unwrap(), CreepKernel::fractional(11.0 / 12.0).unwrap()] {
        let sk = subordinate_kernel(&k, 1.0, &g).unwrap();
        assert!(sk.h.iter().all(|&v| v > 0.0));
        let res = convolution_residual(&sk).unwrap();
        assert!(res.max_abs <= 1e-4, "{}: {:e}", k.family, res.max_abs);
    }
}

#[test]
fn composite_primitive_matches_closed_forms() {
    let g = TimeGrid::uniform(2.0, 50).unwrap();
    for gm in [0.5, 3.0] {
        let w = composite_weights(&CreepKernel::heaviside(), gm, &g).unwrap();
        for (n, &t) in g.nodes().iter().enumerate() {
            let e = t / gm - (1.0 - (-gm * t).exp()) / (gm * gm);
            assert!((w.primitive_at_nodes()[n] - e).abs() < 1e-10);
        }
        for alpha in [0.5, 11.0 / 12.0] {
            let w = composite_weights(&CreepKernel::fractional(alpha).unwrap(), gm, &g).unwrap();
            for (n, &t) in g.nodes().iter().enumerate().skip(1) {
                // the series oracle loses digits to cancellation beyond this
                if gm * t.powf(alpha) > 2.5 {
                    continue;
                }
                let e = fractional_k1(alpha, gm, t);
                let v = w.primitive_at_nodes()[n];
                assert!((v - e).abs() < 1e-9 * e, "α={alpha} γ={gm} t={t}: {v} {e}");
            }
        }
    }
}

#[test]
fn time_domain_composite_converges_to_closed_form() {
    let k = CreepKernel::fractional(11.0 / 12.0).unwrap();
    let mut errs = Vec::new();
    for n in [64usize, 128] {
        let g = TimeGrid::uniform(1.0, n).unwrap();
        let w = composite_weights_time_domain(&k, 1.0, &g).unwrap();
        let e = g
            .nodes()
            .iter()
            .zip(w.primitive_at_nodes())
            .skip(1)
            .map(|(&t, v)| (v - fractional_k1(11.0 / 12.0, 1.0, t)).abs())
            .fold(0.0, f64::max);
        errs.push(e);
    }
    assert!(errs[1] < 1e-3 && errs[0] / errs[1] > 1.8, "{errs:?}");
}

#[test]
fn contour_and_recursion_paths_agree() {
    let g = TimeGrid::uniform(1.0, 1024).unwrap();
    for k in [CreepKernel::heaviside(), CreepKernel::fractional(0.5).unwrap(), CreepKernel::fractional(11.0 / 12.0).unwrap()] {
        let a = subordinate_kernel_with(&k, 1.0, &g, SubordinationMethod::Talbot).unwrap();
        let b = subordinate_kernel_with(&k, 1.0, &g, SubordinationMethod::ConvSqrt).unwrap();
        assert_eq!(b.source, SubordinationSource::ConvSqrt);
        let mut worst = 0.0f64;
        for n in 1..=g.cells() {
            if g.node(n - 1) >= 0.1 {
                worst = worst.max((a.h[n - 1] - b.h[n - 1]).abs() / a.h[n - 1]);
            }
        }
        assert!(worst <= 1e-3, "{}: {worst:e}", k.family);
    }
}

#[test]
fn recursion_handles_tabulated_kernel() {
    // b = (1 + e^{-2t}) / 2 given only through cell integrals
    let g = TimeGrid::uniform(1.0, 200).unwrap();
    let cells: Vec<f64> = (1..=g.cells())
        .map(|n| {
            let (a, b) = (g.node(n - 1), g.node(n));
            0.5 * (b - a) + 0.25 * ((-2.0 * a).exp() - (-2.0 * b).exp())
        })
        .collect();
    let b = Kernel::Sampled(telegraph_core::kernel::SampledKernel::new(g.nodes().to_vec(), cells).unwrap());
    let a1 = Kernel::Function(telegraph_core::kernel::FunctionKernel::new("e", |t: f64| (-t).exp()));
    let k = CreepKernel::custom(1.0, a1, b).unwrap();
    let sk = subordinate_kernel(&k, 1.0, &g).unwrap();
    assert_eq!(sk.source, SubordinationSource::ConvSqrt);
    assert!(sk.h.iter().all(|&v| v > 0.0));
    let res = convolution_residual(&sk).unwrap();
    assert!(res.max_abs <= 1e-10, "{:e}", res.max_abs);
}

#[test]
fn subordinate_kernel_is_completely_positive() {
    let g = TimeGrid::uniform(2.0, 256).unwrap();
    for k in [CreepKernel::heaviside(), CreepKernel::fractional(0.5).unwrap()] {
        let sk = subordinate_kernel(&k, 1.0, &g).unwrap();
        let w = sk.weights().unwrap();
        for nu in [0.1, 1.0, 10.0] {
            let p = solve_relaxation(&w, nu).unwrap();
            assert!(p.s.iter().all(|&v| v >= -1e-12), "{} ν={nu}", k.family);
            assert!(p.r.iter().all(|&v| v >= -1e-12), "{} ν={nu}", k.family);
        }
    }
}

#[test]
fn general_kernel_bound_and_half_half_relation() {
    let c = subordinate_bound_constant(0.5, 0.5);
    for gm in [0.5, 2.0] {
        for t in [0.05f64, 0.5, 2.0, 8.0] {
            for (k, l, l1) in [
                (CreepKernel::heaviside(), 1.0, 0.5 * t),
                (
                    CreepKernel::fractional(0.5).unwrap(),
                    (0.5 * t).powf(-0.5) / gamma(0.5),
                    (0.5 * t).powf(0.5) / gamma(1.5),
                ),
            ] {
                let hh = general_subordinate_value(&k, 0.5, 0.5, gm, t).unwrap();
                let h = subordinate_value(&k, gm, t).unwrap();
                assert!((hh - std::f64::consts::PI * h).abs() < 1e-8 * hh);
                assert!(hh <= c * l);
                for (d1, d2) in [(0.6, 0.7), (0.3, 0.9)] {
                    let v = general_subordinate_value(&k, d1, d2, gm, t).unwrap();
                    let bound = subordinate_bound_constant(d1, d2) * l * l1.powf(1.0 - d1 - d2);
                    assert!(v > 0.0 && v <= bound, "{} δ=({d1},{d2}) t={t}", k.family);
                }
            }
        }
    }
}

#[test]
fn m_limits_formulas_and_transform_limits() {
    let k = CreepKernel::heaviside();
    let m = m_limits(&k, 0.5, 0.5, 2.0).unwrap();
    assert!((m.m0 - 1.0 / std::f64::consts::PI).abs() < 1e-14);
    assert_eq!(m.m_inf, 0.0);
    let m = m_limits(&k, 0.6, 0.7, 2.0).unwrap();
    assert_eq!(m.m0, 0.0);
    let f = CreepKernel::fractional(0.5).unwrap();
    let m = m_limits(&f, 0.5, 0.5, 1.0).unwrap();
    assert_eq!((m.m0, m.m_inf), (0.0, 0.0));
    assert!(m_limits(&k, 0.2, 0.3, 1.0).is_err());

    // m0 = lim 1/(λ ĥ) as λ → ∞ and m_inf = lim 1/ĥ as λ → 0
    let hhat = |kern: &CreepKernel, lam: f64| {
        let b = kern.laplace_b(Complex64::new(lam, 0.0)).unwrap().re;
        std::f64::consts::PI * b / (1.0 + 2.0 * b).sqrt()
    };
    assert!((1.0 / (1e12 * hhat(&k, 1e12)) - 1.0 / std::f64::consts::PI).abs() < 1e-6);
    assert!(1.0 / hhat(&k, 1e-12) < 1e-5);
    assert!(1.0 / (1e12 * hhat(&f, 1e12)) < 1e-2);
}

#[test]
fn moments_of_unit_kernel_are_power_laws() {
    let g = TimeGrid::uniform(1.0, 512).unwrap();
    let w = kernel_weights(&Kernel::constant(1.0), &g).unwrap();
    for kind in [MomentKind::C, MomentKind::D] {
        let m = moment(kind, &w, 0.3).unwrap();
        for (i, &t) in m.times.iter().enumerate() {
            if t < 0.5 {
                continue;
            }
            // cell averages are compared with the cell mean of t^{-0.3}
            let e = if m.cell_averaged {
                let a = t - g.step();
                (t.powf(0.7) - a.powf(0.7)) / (0.7 * g.step())
            } else {
                t.powf(-0.3)
            };
            assert!((m.values[i] - e).abs() / e <= 1e-3, "{kind:?} t={t}: {} vs {e}", m.values[i]);
        }
    }
}

#[test]
fn moment_quadrature_agrees_with_inversion_and_bounds() {
    let g = TimeGrid::graded(1.0, 800, 2.0).unwrap();
    let alpha = 0.5;
    let l = Kernel::g(alpha);
    let w = kernel_weights(&l, &g).unwrap();
    for delta in [0.3, 0.7] {
        let gd = gamma(1.0 - delta);
        let c = moment(MomentKind::C, &w, delta).unwrap();
        let ct = moment_talbot(MomentKind::C, |z| z.powf(-alpha), delta, &g).unwrap();
        let d = moment(MomentKind::D, &w, delta).unwrap();
        for (i, &t) in c.times.iter().enumerate() {
            let l1 = t.powf(alpha) / gamma(1.0 + alpha);
            assert!(c.values[i] >= 0.0 && c.values[i] <= gd * l1.powf(-delta) * (1.0 + 1e-3));
            // lower bound through the partner kernel k1 = g_{1-α}
            let k1 = t.powf(-alpha) / gamma(1.0 - alpha);
            assert!(c.values[i] >= gd * k1.powf(delta) * (1.0 - 1e-3));
            if t >= 0.5 {
                assert!((c.values[i] - ct.values[i]).abs() / ct.values[i] <= 1e-3, "c δ={delta} t={t}: {} {}", c.values[i], ct.values[i]);
            }
            if i > 0 {
                // d is a cell average; l is largest at the left edge
                let a = c.times[i - 1];
                let bound = gd * l.value(a).unwrap() * (a.powf(alpha) / gamma(1.0 + alpha)).powf(-delta);
                assert!(d.values[i] >= 0.0 && d.values[i] <= bound * (1.0 + 1e-3), "d δ={delta} t={t}");
            }
        }
    }
}

#[test]
fn rho_sigma_special_cases() {
    let g = TimeGrid::uniform(2.0, 256).unwrap();
    let k = CreepKernel::heaviside();
    let sk = subordinate_kernel(&k, 1.0, &g).unwrap();
    let r = rho_sigma_from(&sk, RhoSigma::Rho1(0.0)).unwrap();
    assert!(r.values.iter().all(|&v| v == 1.0));

    // σ at τ = -1 is h * h = b * r_γ = 1 - e^{-t}
    let s = rho_sigma_from(&sk, RhoSigma::Sigma(-1.0)).unwrap();
    let st = rho_sigma_talbot(&k, 1.0, RhoSigma::Sigma(-1.0), &g).unwrap();
    for (i, &t) in s.times.iter().enumerate() {
        let e = 1.0 - (-t).exp();
        assert!((st.values[i] - e).abs() < 1e-8);
        if t >= 0.2 {
            assert!((s.values[i] - e).abs() / e < 1e-2, "t={t}");
        }
    }

    // Heaviside, τ ∈ [-1, 0]: σ(t) <= C t^{-τ}
    for tau in [-0.6, -0.3] {
        let s = rho_sigma_from(&sk, RhoSigma::Sigma(tau)).unwrap();
        let ratio = s
            .times
            .iter()
            .zip(&s.values)
            .map(|(&t, &v)| v / t.powf(-tau))
            .fold(0.0, f64::max);
        assert!(ratio.is_finite() && ratio < 5.0, "τ={tau}: {ratio}");
        assert!(s.values.iter().all(|&v| v >= 0.0));
    }
    assert!(rho_sigma_from(&sk, RhoSigma::Sigma(1.0)).is_err());
}

#[test]
fn sigma_bounded_by_quarter_time_profile() {
    let g = TimeGrid::uniform(4.0, 128).unwrap();
    let alpha = 11.0 / 12.0;
    let k = CreepKernel::fractional(alpha).unwrap();
    for tau in [0.2, 0.6] {
        let s = rho_sigma_talbot(&k, 1.0, RhoSigma::Sigma(tau), &g).unwrap();
        let ratios: Vec<f64> = s
            .times
            .iter()
            .zip(&s.values)
            .map(|(&t, &v)| {
                let q = 0.25 * t;
                let b = q.powf(alpha - 1.0) / gamma(alpha);
                let b1 = q.powf(alpha) / gamma(alpha + 1.0);
                v / (b * b1.powf(-tau))
            })
            .collect();
        let c = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(c.is_finite() && c < 10.0, "τ={tau}: {c}");
        assert!(s.values.iter().all(|&v| v > 0.0));
    }
}
