use telegraph_core::kernel::CreepKernel;
use telegraph_core::multipliers::{build_multipliers, default_magnitudes, oracle_damped_wave};
use telegraph_core::volterra::resolve_volterra;
use telegraph_core::TimeGrid;

/// RK4 for `w'' + γw' + ξ²w = 0` with many small steps.
fn ode_reference(gamma: f64, xi: f64, t: f64) -> f64 {
    let steps = 200_000;
    let h = t / steps as f64;
    let f = |y: [f64; 2]| [y[1], -gamma * y[1] - xi * xi * y[0]];
    let mut y = [1.0, 0.0];
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y[0]
}

#[test]
fn closed_form_oracle_matches_ode_integration() {
    assert!((oracle_damped_wave(2.0, 1.0, 1.3) - (-1.3f64).exp() * 2.3).abs() < 1e-15);
    for (g, xi, t) in [(1.0, 10.0, 1.0), (1.0, 0.3, 2.0), (2.0, 5.0, 0.7), (4.0, 0.5, 3.0)] {
        let a = oracle_damped_wave(g, xi, t);
        let b = ode_reference(g, xi, t);
        assert!((a - b).abs() < 1e-10, "γ={g} ξ={xi}: {a} {b}");
    }
}

#[test]
fn heaviside_symbol_is_the_damped_wave() {
    let grid = TimeGrid::uniform(4.0, 2048).unwrap();
    let mags = [0.0, 0.5, 1.0, 5.0, 20.0];
    for gamma in [1.0, 2.0] {
        let tab = build_multipliers(&CreepKernel::heaviside(), gamma, 2.0, &mags, &grid).unwrap();
        for (m, &xi) in mags.iter().enumerate() {
            let err = grid
                .nodes()
                .iter()
                .zip(&tab.c[m])
                .map(|(&t, &c)| (c - oracle_damped_wave(gamma, xi, t)).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-3, "γ={gamma} ξ={xi}: {err:e}");
        }
    }
}

#[test]
fn zero_frequency_row() {
    let grid = TimeGrid::uniform(2.0, 200).unwrap();
    for k in [CreepKernel::heaviside(), CreepKernel::fractional(0.5).unwrap()] {
        let tab = build_multipliers(&k, 1.5, 1.5, &[0.0, 1.0], &grid).unwrap();
        assert!(tab.c[0].iter().all(|&c| c == 1.0));
        let kc = tab.composite().cells();
        for (s, k) in tab.s_int[0].iter().zip(kc) {
            assert!((s - k).abs() < 1e-14);
        }
    }
    // for Heaviside the composite kernel is (1 - e^{-γt}) / γ
    let tab = build_multipliers(&CreepKernel::heaviside(), 1.5, 2.0, &[0.0], &grid).unwrap();
    for n in 1..=grid.cells() {
        let (a, b) = (grid.node(n - 1), grid.node(n));
        let e = (b - a) / 1.5 - ((-1.5 * a).exp() - (-1.5 * b).exp()) / (1.5 * 1.5);
        assert!((tab.s_int[0][n - 1] - e).abs() < 1e-10);
    }
}

#[test]
fn discrete_equation_residual_is_round_off() {
    let grid = TimeGrid::uniform(3.0, 512).unwrap();
    let k = CreepKernel::fractional(11.0 / 12.0).unwrap();
    let tab = build_multipliers(&k, 1.0, 4.0 / 3.0, &[0.0, 1.0], &grid).unwrap();
    assert_eq!(tab.c[1][0], 1.0);
    assert!(tab.c_residual(1).unwrap() <= 1e-12);
}

#[test]
fn symbols_stay_in_unit_ball() {
    let grid = TimeGrid::uniform(4.0, 256).unwrap();
    let mags = default_magnitudes(0.05, 30.0, 24);
    for k in [CreepKernel::heaviside(), CreepKernel::fractional(0.5).unwrap(), CreepKernel::fractional(11.0 / 12.0).unwrap()] {
        for gamma in [0.1, 1.0, 10.0] {
            for beta in [4.0 / 3.0, 2.0] {
                let tab = build_multipliers(&k, gamma, beta, &mags, &grid).unwrap();
                assert!(tab.sup_c() <= 1.0 + 1e-6, "{} γ={gamma} β={beta}: {}", k.family, tab.sup_c());
            }
        }
    }
}

#[test]
fn cosine_and_sine_symbols_are_linked() {
    // C = 1 - ν (1 * S) follows from the two defining equations
    let grid = TimeGrid::uniform(2.0, 1024).unwrap();
    let k = CreepKernel::fractional(0.5).unwrap();
    let mags = [0.7, 3.0];
    let tab = build_multipliers(&k, 1.0, 1.5, &mags, &grid).unwrap();
    for (m, &xi) in mags.iter().enumerate() {
        let nu = xi.powf(1.5);
        let mut acc = 0.0;
        for n in 1..=grid.cells() {
            acc += tab.s_int[m][n - 1];
            let gap = (tab.c[m][n] - (1.0 - nu * acc)).abs();
            assert!(gap < 5e-3, "ξ={xi} n={n}: {gap:e}");
        }
    }
}

#[test]
fn first_order_resolvent_agrees_with_table() {
    let grid = TimeGrid::uniform(2.0, 1024).unwrap();
    let k = CreepKernel::heaviside();
    let tab = build_multipliers(&k, 1.0, 2.0, &[2.0], &grid).unwrap();
    let ones = vec![1.0; grid.cells() + 1];
    let c = resolve_volterra(tab.composite(), 4.0, &ones).unwrap();
    let gap = c.iter().zip(&tab.c[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-2, "{gap:e}");
}

#[test]
fn symbols_are_continuous_in_frequency() {
    let grid = TimeGrid::uniform(2.0, 256).unwrap();
    let k = CreepKernel::fractional(11.0 / 12.0).unwrap();
    let mut jumps = Vec::new();
    for d in [1e-2, 1e-3] {
        let tab = build_multipliers(&k, 1.0, 2.0, &[1.0, 1.0 + d], &grid).unwrap();
        let j = tab.c[0].iter().zip(&tab.c[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        jumps.push(j);
    }
    assert!(jumps[1] < jumps[0] / 5.0 && jumps[1] < 1e-2, "{jumps:?}");
}

#[test]
fn rejects_bad_parameters() {
    let grid = TimeGrid::uniform(1.0, 16).unwrap();
    let k = CreepKernel::heaviside();
    assert!(build_multipliers(&k, 1.0, 2.5, &[0.0], &grid).unwrap_err().is_validation());
    assert!(build_multipliers(&k, 1.0, 2.0, &[1.0, 0.5], &grid).is_err());
    let graded = TimeGrid::graded(1.0, 16, 2.0).unwrap();
    assert!(build_multipliers(&k, 1.0, 2.0, &[0.0], &graded).is_err());
}
