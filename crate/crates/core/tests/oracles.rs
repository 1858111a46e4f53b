//! Numerical checks against closed forms computed independently here.

use cauchy_lab_core::condition::{classify_martingale, ds_partial_integral, psi, psi_quadrature, ClassifyOptions, Verdict};
use cauchy_lab_core::model::{parse_payoff, parse_volatility, validate_assumptions, ProbeGrid, VolatilityModel};
use cauchy_lab_core::pde::{
    defect_cev2, minimal_identity_cev2, solve_cauchy, FarFieldBc, Grid, GridConfig, SolverConfig, Spacing,
};
use cauchy_lab_core::sde::{
    estimate_minimal_price, inverse_bessel_exact, martingale_defect, McParams, SchemeChoice, Sequential,
};

fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn black_scholes_call(x: f64, k: f64, vol: f64, tau: f64) -> f64 {
    let s = vol * tau.sqrt();
    let d1 = ((x / k).ln() + 0.5 * s * s) / s;
    x * phi(d1) - k * phi(d1 - s)
}

/// Composite Simpson for x + ∫₁ˣ u(x − u)/σ²(u) du.
fn psi_simpson(sigma: impl Fn(f64) -> f64, x: f64) -> f64 {
    if x <= 1.0 {
        return x;
    }
    let n = 20_000;
    let h = (x - 1.0) / n as f64;
    let f = |u: f64| u * (x - u) / (sigma(u) * sigma(u));
    let mut acc = f(1.0) + f(x);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(1.0 + i as f64 * h);
    }
    x + acc * h / 3.0
}

fn cev(alpha: f64, p: f64) -> VolatilityModel {
    VolatilityModel::cev(alpha, p).unwrap()
}

fn grid(x_max: f64, nx: usize, nt: usize, t_end: f64) -> Grid {
    Grid::new(
        &GridConfig { x_max, x_intervals: nx, t_intervals: nt, spacing: Spacing::Uniform },
        t_end,
    )
    .unwrap()
}

#[test]
fn frozen_constants() {
    assert!((black_scholes_call(1.0, 1.0, 1.0, 1.0) - 0.382925).abs() < 5e-7);
    for (x, want) in [(1.0, 0.317311), (0.5, 0.022750), (2.0, 1.234150)] {
        assert!((2.0 * x * phi(-1.0 / x) - want).abs() < 5e-7, "x = {x}");
        assert!((defect_cev2(1.0, x, 1.0) - want).abs() < 5e-7, "x = {x}");
    }
    assert!((minimal_identity_cev2(1.0, 1.0, 1.0) - 0.682689).abs() < 5e-7);
}

#[test]
fn partial_integrals_match_power_law() {
    for &(alpha, p) in &[(1.0, 0.6), (2.0, 1.0), (0.5, 1.5), (1.0, 2.0), (3.0, 2.5)] {
        let m = cev(alpha, p);
        for &b in &[2.0f64, 10.0, 1e3, 1e6] {
            let want: f64 = if p == 1.0 {
                b.ln() / (alpha * alpha)
            } else {
                (b.powf(2.0 - 2.0 * p) - 1.0) / ((2.0 - 2.0 * p) * alpha * alpha)
            };
            let got = ds_partial_integral(&m, b).unwrap();
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "α={alpha} p={p} B={b}: {got} vs {want}");
        }
    }
}

#[test]
fn convergent_limits() {
    for &(alpha, p) in &[(1.0, 1.5), (1.0, 2.0), (2.0, 3.0)] {
        let want = 1.0 / (alpha * alpha * (2.0 * p - 2.0));
        for symbolic in [true, false] {
            let r = classify_martingale(&cev(alpha, p), ClassifyOptions { symbolic, margin: 0.05 }).unwrap();
            assert_eq!(r.verdict, Verdict::StrictLocalMartingale);
            let got = r.limit_value.unwrap();
            assert!((got - want).abs() < 1e-6, "α={alpha} p={p} symbolic={symbolic}: {got}");
        }
    }
}

#[test]
fn psi_against_simpson() {
    let cases = [
        ("cev:p=1", 50.0),
        ("cev:p=1.5", 20.0),
        ("cev:alpha=0.7,p=0.8", 30.0),
        ("x*(1+1/(1+x))", 40.0),
        ("sqrt(x)+x^2", 10.0),
    ];
    for (spec, x) in cases {
        let m = parse_volatility(spec).unwrap();
        let want = psi_simpson(|u| m.sigma(u), x);
        for got in [psi(&m, x).unwrap(), psi_quadrature(&m, x).unwrap()] {
            assert!((got - want).abs() < 1e-8 * want, "{spec} at {x}: {got} vs {want}");
        }
    }
}

#[test]
fn pde_matches_black_scholes() {
    let m = cev(1.0, 1.0);
    let g = parse_payoff("call:K=1").unwrap();
    let sol = solve_cauchy(&m, &g, &grid(16.0, 800, 800, 1.0), &FarFieldBc::DirichletPayoff, &SolverConfig::default()).unwrap();
    for x in [0.5, 1.0, 2.0] {
        let want = black_scholes_call(x, 1.0, 1.0, 1.0);
        assert!((sol.value_at(x, 0.0) - want).abs() < 1e-4, "x = {x}");
    }
}

#[test]
fn crank_nicolson_refines_at_second_order() {
    let m = cev(1.0, 1.0);
    let g = parse_payoff("call:K=1").unwrap();
    let want = black_scholes_call(1.0, 1.0, 1.0, 1.0);
    let errs: Vec<f64> = [80, 160, 320]
        .iter()
        .map(|&n| {
            let sol = solve_cauchy(&m, &g, &grid(8.0, n, n, 1.0), &FarFieldBc::DirichletPayoff, &SolverConfig::default())
                .unwrap();
            (sol.value_at(1.0, 0.0) - want).abs()
        })
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.5, "errors {errs:?}");
    }
}

#[test]
fn dirichlet_profile_recovers_minimal_solution() {
    let m = cev(1.0, 2.0);
    let g = parse_payoff("identity").unwrap();
    let gr = grid(16.0, 800, 400, 1.0);
    let profile = gr.t_nodes.iter().map(|&t| minimal_identity_cev2(1.0, 16.0, 1.0 - t)).collect();
    let sol = solve_cauchy(&m, &g, &gr, &FarFieldBc::DirichletProfile(profile), &SolverConfig::default()).unwrap();
    for x in [0.25, 1.0, 3.0] {
        let want = minimal_identity_cev2(1.0, x, 1.0);
        assert!((sol.value_at(x, 0.0) - want).abs() < 2e-3, "x = {x}");
    }
    for bc in [FarFieldBc::DirichletPayoff, FarFieldBc::ZeroGamma] {
        let sol = solve_cauchy(&m, &g, &gr, &bc, &SolverConfig::default()).unwrap();
        assert!((sol.value_at(1.0, 0.0) - 1.0).abs() < 1e-10);
    }
}

#[test]
fn exact_sampler_mean() {
    for &(alpha, x, tau) in &[(1.0, 1.0, 1.0), (2.0, 0.5, 0.25), (1.0, 3.0, 2.0)] {
        let batch = inverse_bessel_exact(alpha, x, 0.0, tau, 200_000, 11, &Sequential).unwrap();
        let n = batch.terminal_values.len() as f64;
        let mean = batch.terminal_values.iter().sum::<f64>() / n;
        let var = batch.terminal_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let want = x * (2.0 * phi(1.0 / (x * alpha * tau.sqrt())) - 1.0);
        assert!((mean - want).abs() < 4.0 * (var / n).sqrt(), "α={alpha} x={x}: {mean} vs {want}");
    }
}

#[test]
fn exact_defect_estimate() {
    let params = McParams { n_paths: 200_000, seed: 5, ..McParams::default() };
    let est = martingale_defect(&cev(1.0, 2.0), 1.0, 0.0, 1.0, &params, false, &Sequential).unwrap();
    assert!(est.within(0.317311, 4.0), "{est:?}");
}

#[test]
fn killed_ladder_against_closed_form() {
    // E[X_T; max X < n] = x(2Φ((1/x − 1/n)/√T) − 1) for σ = x²
    let params = McParams { n_paths: 20_000, steps_per_unit_time: 2000.0, seed: 3, scheme: SchemeChoice::Euler };
    let ladder = [2.0, 4.0, 8.0];
    let g = parse_payoff("identity").unwrap();
    let ests = estimate_minimal_price(&cev(1.0, 2.0), &g, 1.0, 0.0, 1.0, &ladder, &params, &Sequential).unwrap();
    for (est, &n) in ests.iter().zip(&ladder) {
        let want = 2.0 * phi(1.0 - 1.0 / n) - 1.0;
        // the discrete monitor misses crossings between steps, biasing upward
        assert!((est.mean - want).abs() < 4.0 * est.stderr + 0.01, "n = {n}: {} vs {want}", est.mean);
    }
}

#[test]
fn holder_exponent_by_regression() {
    let probe = ProbeGrid::default();
    for (spec, q, pass) in [("x^0.3", 0.3, false), ("sqrt(x)", 0.5, true), ("x", 1.0, true), ("x^2", 1.0, true)] {
        let r = validate_assumptions(&parse_volatility(spec).unwrap(), &probe).unwrap();
        let h = &r.holder_half_estimate;
        assert_eq!(h.pass, pass, "{spec}: {h:?}");
        if spec != "x^2" {
            assert!((h.boundary_exponent.unwrap() - q).abs() < 0.02, "{spec}: {h:?}");
        }
    }
}

#[test]
fn put_and_call_growth() {
    use cauchy_lab_core::model::GrowthClass;
    assert_eq!(parse_payoff("put:K=3").unwrap().growth(), GrowthClass::StrictlySublinear);
    assert!(matches!(parse_payoff("call:K=3").unwrap().growth(), GrowthClass::AtMostLinear { .. }));
    assert_eq!(parse_payoff("x^2").unwrap().growth(), GrowthClass::Superlinear);
    assert_eq!(parse_payoff("sqrt(x)").unwrap().growth(), GrowthClass::StrictlySublinear);
}
