use proptest::prelude::*;

use cauchy_lab_core::condition::{classify_martingale, psi_growth_profile, ClassifyOptions, Verdict};
use cauchy_lab_core::expr::Expr;
use cauchy_lab_core::model::{parse_payoff, GrowthClass, PayoffSpec, VolatilityModel};
use cauchy_lab_core::pde::{solve_cauchy, FarFieldBc, Grid, GridConfig, SolverConfig, Spacing};
use cauchy_lab_core::sde::{
    estimate_minimal_price, inverse_bessel_exact, simulate_paths, McParams, SchemeChoice, Sequential, SimParams,
};

fn expr_string() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        (0.1f64..20.0).prop_map(|c| format!("{c}")),
        (1u32..50).prop_map(|c| c.to_string()),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} + {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) - {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a}*({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) / ({b})")),
            (inner.clone(), 1u32..4).prop_map(|(a, k)| format!("({a})^{k}")),
            inner.clone().prop_map(|a| format!("-({a})")),
            inner.clone().prop_map(|a| format!("sqrt({a})")),
            inner.clone().prop_map(|a| format!("log(1 + abs({a}))")),
            (inner.clone(), inner).prop_map(|(a, b)| format!("max({a}, {b})")),
        ]
    })
}

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

fn grid(x_max: f64, nx: usize, nt: usize) -> Grid {
    Grid::new(
        &GridConfig { x_max, x_intervals: nx, t_intervals: nt, spacing: Spacing::Uniform },
        1.0,
    )
    .unwrap()
}

fn payoff_strategy() -> impl Strategy<Value = PayoffSpec> {
    prop_oneof![
        (0.05f64..5.0).prop_map(|k| parse_payoff(&format!("call:K={k}")).unwrap()),
        (0.05f64..5.0).prop_map(|k| parse_payoff(&format!("put:K={k}")).unwrap()),
        (0.0f64..3.0).prop_map(|c| parse_payoff(&format!("const:{c}")).unwrap()),
        (0.1f64..3.0, 0.1f64..3.0).prop_map(|(a, k)| parse_payoff(&format!("{a}*min(x, {k})")).unwrap()),
        Just(parse_payoff("identity").unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cev_matches_power(alpha in 0.1f64..10.0, p in 0.1f64..3.0, x in 1e-3f64..1e3) {
        let m = VolatilityModel::cev(alpha, p).unwrap();
        let want = alpha * x.powf(p);
        prop_assert!((m.sigma(x) - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn print_parse_round_trip(src in expr_string()) {
        let e1 = Expr::parse(&src).unwrap();
        let e2 = Expr::parse(&e1.to_string()).unwrap();
        prop_assert_eq!(&e1, &e2);
        for x in [0.0, 0.5, 1.0, 3.7, 100.0] {
            prop_assert!(same(e1.eval(x), e2.eval(x)));
        }
    }

    #[test]
    fn sigma_vanishes_off_half_line(src in expr_string(), alpha in 0.1f64..5.0, p in 0.1f64..3.0, x in -1e6f64..=0.0) {
        let models = [
            VolatilityModel::parse_unchecked(&src).unwrap(),
            VolatilityModel::cev(alpha, p).unwrap(),
        ];
        for m in &models {
            prop_assert_eq!(m.sigma(x), 0.0);
        }
    }

    #[test]
    fn put_sublinear_call_linear(k in 0.01f64..100.0) {
        let put = parse_payoff(&format!("put:K={k}")).unwrap();
        let call = parse_payoff(&format!("call:K={k}")).unwrap();
        prop_assert_eq!(put.growth(), GrowthClass::StrictlySublinear);
        prop_assert!(matches!(call.growth(), GrowthClass::AtMostLinear { .. }), "{:?}", call.growth());
    }

    #[test]
    fn psi_ratio_monotone(alpha in 0.2f64..5.0, p in 0.5f64..2.5, a in 0.0f64..3.0) {
        let xs = [1.0, 3.0, 10.0, 30.0, 100.0, 1e3, 1e4];
        let cev = VolatilityModel::cev(alpha, p).unwrap();
        let bumped = VolatilityModel::parse_unchecked(&format!("x^{p}*(1 + {a}/(1 + x))")).unwrap();
        for m in [cev, bumped] {
            let prof = psi_growth_profile(&m, &xs).unwrap();
            prop_assert!(prof.monotone, "{:?}", prof.points);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn numeric_verdict_agrees(alpha in 0.2f64..5.0, p in prop_oneof![0.3f64..0.9, 1.1f64..3.0]) {
        let m = VolatilityModel::cev(alpha, p).unwrap();
        let sym = classify_martingale(&m, ClassifyOptions::default()).unwrap();
        let num = classify_martingale(&m, ClassifyOptions { symbolic: false, ..ClassifyOptions::default() }).unwrap();
        prop_assert_eq!(sym.verdict, num.verdict);
        prop_assert_eq!(sym.verdict == Verdict::Martingale, p <= 1.0);
    }

    #[test]
    fn implicit_scheme_maximum_principle(g1 in payoff_strategy(), g2 in payoff_strategy(), p in 0.5f64..2.0) {
        let m = VolatilityModel::cev(1.0, p).unwrap();
        let gr = grid(6.0, 120, 60);
        let solver = SolverConfig { theta: 1.0, startup_steps: 0 };
        for bc in [FarFieldBc::DirichletPayoff, FarFieldBc::ZeroGamma] {
            // the ZeroGamma far node is a linear extrapolation, not an unknown
            let skip = usize::from(bc == FarFieldBc::ZeroGamma);
            let u1 = solve_cauchy(&m, &g1, &gr, &bc, &solver).unwrap();
            let u12 = solve_cauchy(&m, &g1.sum(&g2).unwrap(), &gr, &bc, &solver).unwrap();
            let last = u1.values.len() - 1;
            let (lo, hi) = u1.values[last].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            for (r1, r12) in u1.values.iter().zip(&u12.values) {
                let n = r1.len() - skip;
                for (&a, &c) in r1[..n].iter().zip(&r12[..n]) {
                    prop_assert!(a >= lo - 1e-12 && a <= hi + 1e-12, "{a} outside [{lo}, {hi}]");
                    prop_assert!(a <= c + 1e-12, "comparison {a} > {c}");
                }
            }
        }
    }

    #[test]
    fn implicit_scheme_is_linear(g1 in payoff_strategy(), g2 in payoff_strategy(), p in 0.5f64..2.0) {
        let m = VolatilityModel::cev(1.0, p).unwrap();
        let gr = grid(6.0, 120, 60);
        let solver = SolverConfig { theta: 1.0, startup_steps: 0 };
        for bc in [FarFieldBc::DirichletPayoff, FarFieldBc::ZeroGamma] {
            let u1 = solve_cauchy(&m, &g1, &gr, &bc, &solver).unwrap();
            let u2 = solve_cauchy(&m, &g2, &gr, &bc, &solver).unwrap();
            let u12 = solve_cauchy(&m, &g1.sum(&g2).unwrap(), &gr, &bc, &solver).unwrap();
            for ((r1, r2), r12) in u1.values.iter().zip(&u2.values).zip(&u12.values) {
                for ((a, b), c) in r1.iter().zip(r2).zip(r12) {
                    prop_assert!((a + b - c).abs() <= 1e-10 * (1.0 + c.abs()));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn euler_chain_is_a_martingale(p in 0.5f64..1.5, x in 0.5f64..2.0, seed in any::<u64>()) {
        // coarse steps with p near 2 overflow, so stay where the chain is tame
        let m = VolatilityModel::cev(1.0, p).unwrap();
        let params = SimParams { x0: x, t0: 0.0, t_end: 0.5, n_steps: 400, n_paths: 4000, seed };
        let batch = simulate_paths(&m, &params, None, &Sequential).unwrap();
        let v = &batch.terminal_values;
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let se = (v.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        prop_assert!((mean - x).abs() <= 4.5 * se, "mean {mean} vs {x}, se {se}");
    }

    #[test]
    fn minimal_price_ladder_nondecreasing(
        p in 0.5f64..2.5,
        a in 0.0f64..2.0,
        expr in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let m = if expr {
            VolatilityModel::parse_unchecked(&format!("x^{p} + {a}*sqrt(x)")).unwrap()
        } else {
            VolatilityModel::cev(1.0 + a, p).unwrap()
        };
        let g = parse_payoff("identity").unwrap();
        let params = McParams { n_paths: 500, steps_per_unit_time: 200.0, seed, scheme: SchemeChoice::Euler };
        let ests = estimate_minimal_price(&m, &g, 1.0, 0.0, 1.0, &[2.0, 4.0, 8.0, 16.0], &params, &Sequential).unwrap();
        for w in ests.windows(2) {
            prop_assert!(w[1].mean >= w[0].mean);
        }
    }
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn euler_law_matches_exact_sampler() {
    let n = 10_000;
    let m = VolatilityModel::cev(1.0, 2.0).unwrap();
    let params = SimParams { x0: 1.0, t0: 0.0, t_end: 1.0, n_steps: 2000, n_paths: n, seed: 21 };
    let euler = simulate_paths(&m, &params, None, &Sequential).unwrap().terminal_values;
    let exact = inverse_bessel_exact(1.0, 1.0, 0.0, 1.0, n, 22, &Sequential).unwrap().terminal_values;
    let d = ks(euler, exact);
    // 0.1% critical value
    let crit = 1.949 * (2.0 / n as f64).sqrt();
    assert!(d < crit, "KS distance {d} ≥ {crit}");
}
