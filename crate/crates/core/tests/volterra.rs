use num_complex::Complex64;
use telegraph_core::kernel::Kernel;
use telegraph_core::volterra::{
    apply_kernel, kernel_weights, resolve_volterra, solve_direct, solve_relaxation, solve_relaxation_with, Rule,
};
use telegraph_core::TimeGrid;

/// E_{1/2}(-√t) by its power series.
fn ml_half_series(t: f64) -> f64 {
    let z = -t.sqrt();
    let mut sum = 0.0;
    let mut zk = 1.0;
    for k in 0..200 {
        let term = zk / statrs::function::gamma::gamma(0.5 * k as f64 + 1.0);
        sum += term;
        if k > 10 && term.abs() < 1e-18 {
            break;
        }
        zk *= z;
    }
    sum
}

fn ml_half_closed(t: f64) -> f64 {
    t.exp() * statrs::function::erf::erfc(t.sqrt())
}

fn max_err(grid: &TimeGrid, s: &[f64], exact: impl Fn(f64) -> f64) -> f64 {
    grid.nodes()
        .iter()
        .zip(s)
        .map(|(&t, &v)| (v - exact(t)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn half_kernel_weights_closed_form() {
    let g = TimeGrid::uniform(1.0, 2).unwrap();
    let w = kernel_weights(&Kernel::g(0.5), &g).unwrap();
    let pi = std::f64::consts::PI;
    let e = [2.0 * 0.5f64.sqrt() / pi.sqrt(), 2.0 * (1.0 - 0.5f64.sqrt()) / pi.sqrt()];
    for (a, b) in w.cells().iter().zip(e) {
        assert!((a - b).abs() < 1e-14, "{a} {b}");
    }
}

#[test]
fn weight_sum_matches_global_quadrature() {
    let g = TimeGrid::graded(2.5, 40, 2.0).unwrap();
    for mu in [0.3, 0.5, 11.0 / 12.0, 1.0] {
        let w = kernel_weights(&Kernel::g(mu), &g).unwrap();
        let total: f64 = w.cells().iter().sum();
        let q = telegraph_core::quad::tanh_sinh(
            |_, dl, _| dl.powf(mu - 1.0) / statrs::function::gamma::gamma(mu),
            0.0,
            2.5,
            1e-14,
        );
        assert!((total - q.value).abs() < 1e-8, "mu={mu}: {total} vs {}", q.value);
    }
}

#[test]
fn exponential_oracle_and_order() {
    let mut errs = Vec::new();
    for n in [512usize, 1024] {
        let g = TimeGrid::uniform(1.0, n).unwrap();
        let w = kernel_weights(&Kernel::constant(1.0), &g).unwrap();
        let p = solve_relaxation(&w, 1.0f64).unwrap();
        errs.push(max_err(&g, &p.s, |t| (-t).exp()));
    }
    assert!(errs[1] <= 1e-3, "{errs:?}");
    assert!(errs[0] / errs[1] >= 1.9, "{errs:?}");
}

#[test]
fn mittag_leffler_oracles_agree() {
    // 30-digit values of e^t erfc(√t)
    let reference = [
        (0.01, 0.89645697996912664193),
        (0.3, 0.59201841131473565407),
        (1.0, 0.42758357615580700441),
    ];
    for (t, v) in reference {
        assert!((ml_half_series(t) - v).abs() < 1e-13, "series t={t}");
        assert!((ml_half_closed(t) - v).abs() < 1e-9, "closed t={t}");
    }
}

#[test]
fn half_kernel_graded_matches_mittag_leffler() {
    let mut errs = Vec::new();
    for n in [1024usize, 2048] {
        let g = TimeGrid::graded(1.0, n, 2.0).unwrap();
        let w = kernel_weights(&Kernel::g(0.5), &g).unwrap();
        let p = solve_relaxation(&w, 1.0f64).unwrap();
        errs.push(max_err(&g, &p.s, ml_half_series));
    }
    assert!(errs[1] <= 1e-2, "{errs:?}");
    assert!(errs[0] / errs[1] >= 1.9, "{errs:?}");
}

#[test]
fn complex_gamma_keeps_s_equal_one_minus_gamma_r() {
    let g = TimeGrid::graded(2.0, 128, 2.0).unwrap();
    let w = kernel_weights(&Kernel::g(0.7), &g).unwrap();
    let gamma = Complex64::new(0.0, 3.0);
    let p = solve_relaxation(&w, gamma).unwrap();
    for (s, r) in p.s.iter().zip(&p.r_primitive) {
        let d = *s - (Complex64::new(1.0, 0.0) - gamma * *r);
        assert!(d.norm() < 1e-12, "{d}");
    }
    assert_eq!(p.s[0], Complex64::new(1.0, 0.0));
}

#[test]
fn relaxation_bounds_for_completely_positive_kernels() {
    for (mu, grid) in [
        (1.0, TimeGrid::uniform(3.0, 256).unwrap()),
        (0.5, TimeGrid::graded(3.0, 256, 2.0).unwrap()),
        (11.0 / 12.0, TimeGrid::graded(3.0, 256, 2.0).unwrap()),
    ] {
        let l = Kernel::g(mu);
        let w = kernel_weights(&l, &grid).unwrap();
        let lp = w.primitive_at_nodes();
        let avg = w.averages();
        for gamma in [0.1, 1.0, 10.0] {
            let p = solve_relaxation(&w, gamma).unwrap();
            for n in 0..p.s.len() {
                assert!(p.s[n] >= -1e-14 && p.s[n] <= 1.0 + 1e-14);
                assert!(p.s[n] <= 1.0 / (1.0 + gamma * lp[n]) + 1e-2);
                if n > 0 {
                    assert!(p.s[n] <= p.s[n - 1] + 1e-14);
                }
            }
            for n in 1..p.s.len() {
                let r = p.r[n - 1];
                assert!(r >= -1e-14 && r <= avg[n - 1] * (1.0 + 1e-12), "mu={mu} γ={gamma} n={n}");
                let t = grid.node(n);
                let bound = l.value(t).unwrap() / (1.0 + gamma * lp[n]);
                if n > 1 {
                    // the cell average sits between the endpoint values
                    let prev = l.value(grid.node(n - 1)).unwrap() / (1.0 + gamma * lp[n - 1]);
                    assert!(r <= prev.max(bound) + 1e-2, "mu={mu} γ={gamma} n={n}");
                }
            }
        }
    }
}

#[test]
fn resolvent_formula_matches_direct_solve() {
    let g = TimeGrid::uniform(2.0, 300).unwrap();
    let w = kernel_weights(&Kernel::g(0.6), &g).unwrap();
    let f: Vec<Complex64> = g
        .nodes()
        .iter()
        .map(|&t| Complex64::new((3.0 * t).sin() + 0.5 * t * t, (t - 1.0).tanh()))
        .collect();
    let gamma = Complex64::new(1.5, -0.7);
    let a = resolve_volterra(&w, gamma, &f).unwrap();
    let b = solve_direct(&w, gamma, &f, Rule::Rectangle).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).norm() < 1e-10, "{x} {y}");
    }
}

#[test]
fn resolvent_special_forcings() {
    let g = TimeGrid::uniform(1.0, 100).unwrap();
    let w = kernel_weights(&Kernel::Function(telegraph_core::kernel::FunctionKernel::new("e", |t: f64| (-t).exp())), &g)
        .unwrap();
    let gamma = 2.0f64;
    let p = solve_relaxation(&w, gamma).unwrap();
    let ones = vec![1.0; g.cells() + 1];
    let v = resolve_volterra(&w, gamma, &ones).unwrap();
    for (x, y) in v.iter().zip(&p.s) {
        assert!((x - y).abs() < 1e-12);
    }
    // f = 1*l at the nodes reproduces the primitive of r
    let v = resolve_volterra(&w, gamma, w.primitive_at_nodes()).unwrap();
    for (x, y) in v.iter().zip(&p.r_primitive) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn discrete_equation_holds_to_round_off() {
    let g = TimeGrid::uniform(1.0, 200).unwrap();
    let w = kernel_weights(&Kernel::g(0.5), &g).unwrap();
    for rule in [Rule::Rectangle, Rule::Trapezoid] {
        let p = solve_relaxation_with(&w, 3.0f64, rule).unwrap();
        let conv = apply_kernel(&w, &p.s, rule).unwrap();
        for n in 1..p.s.len() {
            assert!((p.s[n] + 3.0 * conv[n] - 1.0).abs() < 1e-12);
        }
    }
}
