use bangbang::analysis::{
    analyze, check_perturbed_ssc, check_quadratic_growth, compute_kappa, default_eps_range, default_tau,
    estimate_ssc_delta, fit_measure_condition, in_cone, rayleigh_ratio, sample_critical_cone,
    verify_first_order_growth, AnalysisSettings, ConeParams,
};
use bangbang::benchmarks;
use bangbang::objective::{eval_perturbed, EvaluatedControl};
use bangbang::optimizer::{solve, vi_gap, SolveOptions};
use bangbang::stability::default_directions;
use bangbang::{GridFunction, Norm, PdeSolver, ProblemSpec};
use proptest::prelude::*;
use std::sync::OnceLock;

fn solved<T: bangbang::Real>(spec: ProblemSpec<T>) -> (PdeSolver<T>, EvaluatedControl<T>) {
    let pde = PdeSolver::new(spec);
    let trace = solve(&pde, &SolveOptions::default(), &pde.spec().bounds.midpoint()).unwrap();
    assert!(trace.converged, "gap {}", trace.final_gap());
    (pde, trace.final_point)
}

fn lq() -> &'static (PdeSolver<f64>, EvaluatedControl<f64>) {
    static CELL: OnceLock<(PdeSolver<f64>, EvaluatedControl<f64>)> = OnceLock::new();
    CELL.get_or_init(|| solved(benchmarks::linear_quadratic(128).unwrap()))
}

#[test]
fn single_precision_solve_matches_the_discrete_optimum() {
    let (pde, ec) = solved(benchmarks::linear_quadratic::<f32>(64).unwrap());
    let exact = benchmarks::discrete_control(pde.grid());
    let diff = ec.control.sub(&exact).unwrap().lp_norm(Norm::L1);
    assert!(diff <= 2.0 / 64.0, "{diff}");
}

#[test]
fn quadratic_growth_is_local() {
    let (pde, ec) = lq();
    let b = &pde.spec().bounds;
    let (lo, hi) = default_eps_range(&ec.adjoint).unwrap();
    let fit = fit_measure_condition(&ec.adjoint, lo, hi, 20).unwrap();
    let kappa = compute_kappa(b, &fit);
    let rates: Vec<f64> = [0.05, 0.1, 0.2]
        .iter()
        .map(|&r| {
            check_quadratic_growth(pde, ec, kappa, fit.exponent, 1.0, 60, r, 3)
                .unwrap()
                .pass_rate
        })
        .collect();
    assert!(rates.windows(2).all(|w| w[1] <= w[0]), "{rates:?}");
    assert_eq!(rates[1], 1.0);
}

#[test]
fn perturbed_coercivity_approaches_the_unperturbed_value() {
    let (pde, ec) = solved(benchmarks::cubic::<f64>(128).unwrap());
    let (lo, hi) = default_eps_range(&ec.adjoint).unwrap();
    let fit = fit_measure_condition(&ec.adjoint, lo, hi, 20).unwrap();
    let cone = ConeParams::new(default_tau(&fit, 1.0)).unwrap();
    let base = estimate_ssc_delta(&pde, &ec, &cone, 30, 1).unwrap();
    let v = base.argmin.clone().unwrap();
    let d = default_directions(pde.grid(), 1).swap_remove(2);
    let (mut along, mut sampled) = (Vec::new(), Vec::new());
    for n in 0..8 {
        let e = d.scale(0.1 / 2f64.powi(n));
        let at = eval_perturbed(&pde, &ec.control, &e).unwrap();
        along.push((rayleigh_ratio(&pde, &at, &v).unwrap() - base.delta_min).abs());
        sampled.push((check_perturbed_ssc(&pde, &ec, &e, &cone, 30, 1).unwrap().delta_min - base.delta_min).abs());
    }
    // along a fixed direction the ratio is smooth in e
    assert!(along.windows(2).all(|w| w[1] < w[0]), "{along:?}");
    // the sampled minimum switches direction once, then follows the same rate
    assert!(sampled.iter().all(|g| *g <= sampled[0]), "{sampled:?}");
    assert!(
        sampled[5..].windows(2).all(|w| (w[1] / w[0] - 0.5).abs() < 0.05),
        "{sampled:?}"
    );
}

#[test]
fn full_analysis_on_the_benchmark() {
    let (pde, ec) = lq();
    let settings = AnalysisSettings {
        growth_samples: 100,
        cone_samples: 20,
        quadratic_samples: 40,
        ..AnalysisSettings::default()
    };
    let a = analyze(pde, ec, &settings).unwrap();
    assert!(a.passed(), "{:?}", a.report());
    assert!((a.ssc.delta_min - 1.0).abs() < 1e-10);
    assert!(a.kappa_positive_exponent > a.kappa);
    let again = analyze(pde, ec, &settings).unwrap();
    assert_eq!(a.report(), again.report());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cone_samples_are_members(tau in 0.0f64..3.0, seed in 0u64..1000) {
        let (pde, ec) = lq();
        let b = &pde.spec().bounds;
        let cone = ConeParams::new(tau).unwrap();
        let s = sample_critical_cone(ec, b, &cone, 5, seed).unwrap();
        for v in &s.directions {
            prop_assert!(in_cone(ec, b, &cone, v));
            prop_assert!((v.lp_norm(Norm::L2) - 1.0).abs() < 1e-12);
            for (k, &vk) in v.values().iter().enumerate() {
                if ec.adjoint.values()[k].abs() > tau {
                    prop_assert_eq!(vk, 0.0);
                }
            }
        }
    }

    #[test]
    fn rayleigh_ratio_is_scale_invariant(c in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0], seed in 0u64..1000) {
        let (pde, ec) = lq();
        let s = sample_critical_cone(ec, &pde.spec().bounds, &ConeParams::new(1.0).unwrap(), 1, seed).unwrap();
        let v = &s.directions[0];
        let a = rayleigh_ratio(pde, ec, v).unwrap();
        let b = rayleigh_ratio(pde, ec, &v.scale(c)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn variational_inequality_holds_at_the_solution(seed in 0u64..1000) {
        let (pde, ec) = lq();
        prop_assert!(vi_gap(ec, &pde.spec().bounds) <= 1e-10);
        let g = verify_first_order_growth(pde, ec, 0.0, 1.0, 8, seed).unwrap();
        prop_assert_eq!(g.pass_rate, 1.0);
        prop_assert!(g.worst_violation <= 1e-10);
    }

    #[test]
    fn level_set_fit_recovers_power_profiles(p in 1.0f64..2.0) {
        let g = bangbang::Grid::<f64>::unit_interval(512).unwrap();
        let phi = GridFunction::from_fn(&g, |x: f64, _| (x - 0.5).abs().powf(p));
        let (lo, hi) = default_eps_range(&phi).unwrap();
        let fit = fit_measure_condition(&phi, lo, hi, 20).unwrap();
        prop_assert!((fit.exponent - 1.0 / p).abs() < 0.06, "p = {}, ae = {}", p, fit.exponent);
    }
}
