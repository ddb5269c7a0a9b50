//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use bangbang::analysis::{
    check_perturbed_ssc, check_quadratic_growth, compute_kappa, default_eps_range, default_tau, estimate_ssc_delta,
    fit_measure_condition, verify_first_order_growth, ConeParams,
};
use bangbang::benchmarks;
use bangbang::model::bang_bang_residual;
use bangbang::objective::{eval_j, grad_pairing, hessian_form, value_j, EvaluatedControl};
use bangbang::optimizer::{solve, solve_perturbed, vi_gap, SolveOptions};
use bangbang::rng::{stream, Purpose};
use bangbang::stability::{default_directions, fit_holder, run_sweep, SweepPlan, Verdict};
use bangbang::{Bounds, Diffusion, Grid, GridFunction, Integrand, Nonlinearity, PdeSolver, Perturbation, ProblemSpec};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn solved(spec: ProblemSpec<f64>) -> Result<(PdeSolver<f64>, EvaluatedControl<f64>), String> {
    let pde = PdeSolver::new(spec);
    let trace = solve(&pde, &SolveOptions::default(), &pde.spec().bounds.midpoint()).map_err(err)?;
    if !trace.converged {
        return Err(format!("reference solve stopped at gap {:e}", trace.final_gap()));
    }
    Ok((pde, trace.final_point))
}

fn random_pair(grid: &std::sync::Arc<Grid<f64>>, i: u64) -> (GridFunction<f64>, GridFunction<f64>, GridFunction<f64>) {
    let mut rng = stream(2024, Purpose::Analysis, i);
    let mut draw = || {
        let vals: Vec<f64> = (0..grid.node_count()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        GridFunction::new(grid.clone(), vals).unwrap()
    };
    (draw(), draw(), draw())
}

fn gradient_fidelity() -> Outcome {
    let pde = PdeSolver::new(benchmarks::cubic::<f64>(64).map_err(err)?);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let (u, v, _) = random_pair(pde.grid(), i);
        let ec = eval_j(&pde, &u).map_err(err)?;
        let exact = grad_pairing(&ec, &v).map_err(err)?;
        let plus = value_j(&pde, &u.axpy(h, &v).map_err(err)?).map_err(err)?;
        let minus = value_j(&pde, &u.axpy(-h, &v).map_err(err)?).map_err(err)?;
        let fd = (plus - minus) / (2.0 * h);
        worst = worst.max((fd - exact).abs() / exact.abs().max(1e-300));
    }
    check(worst <= 1e-5, format!("max relative error {worst:.2e} (tol 1e-5)"))
}

fn hessian_fidelity() -> Outcome {
    let pde = PdeSolver::new(benchmarks::cubic::<f64>(64).map_err(err)?);
    let h = 1e-4;
    let (mut worst, mut asym): (f64, f64) = (0.0, 0.0);
    for i in 0..20 {
        let (u, v, w) = random_pair(pde.grid(), i);
        let ec = eval_j(&pde, &u).map_err(err)?;
        let exact = hessian_form(&pde, &ec, &v, &w).map_err(err)?;
        let swapped = hessian_form(&pde, &ec, &w, &v).map_err(err)?;
        let plus = eval_j(&pde, &u.axpy(h, &v).map_err(err)?).map_err(err)?;
        let minus = eval_j(&pde, &u.axpy(-h, &v).map_err(err)?).map_err(err)?;
        let fd = (grad_pairing(&plus, &w).map_err(err)? - grad_pairing(&minus, &w).map_err(err)?) / (2.0 * h);
        worst = worst.max((fd - exact).abs() / exact.abs());
        asym = asym.max((exact - swapped).abs() / exact.abs());
    }
    check(
        worst <= 1e-4 && asym <= 1e-12,
        format!("max relative error {worst:.2e} (tol 1e-4), asymmetry {asym:.2e} (tol 1e-12)"),
    )
}

fn manufactured_convergence() -> Outcome {
    use std::f64::consts::PI;
    let exact = |x: f64| (PI * x).sin();
    let mut errors = Vec::new();
    for n in [16, 32, 64, 128] {
        let grid = Grid::unit_interval(n).map_err(err)?;
        let spec = ProblemSpec::new(
            grid.clone(),
            Diffusion::Constant(1.0),
            Nonlinearity::Cubic(1.0),
            Integrand::tracking(GridFunction::zeros(&grid)),
            Bounds::constant(&grid, -20.0, 20.0).map_err(err)?,
        )
        .map_err(err)?;
        let rhs = GridFunction::from_fn(&grid, |x: f64, _| PI * PI * exact(x) + exact(x).powi(3));
        let y = PdeSolver::new(spec).solve_state(&rhs).map_err(err)?.state;
        let e = y
            .values()
            .iter()
            .enumerate()
            .map(|(k, v)| (v - exact(grid.coords(k)[0])).abs())
            .fold(0.0, f64::max);
        errors.push(e);
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    check(
        orders.iter().all(|p| (1.8..=2.2).contains(p)),
        format!(
            "observed orders {:?}",
            orders.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn bang_bang_structure() -> Outcome {
    let (pde, ec) = solved(benchmarks::linear_quadratic(128).map_err(err)?)?;
    let b = &pde.spec().bounds;
    let gap = vi_gap(&ec, b);
    let bb = bang_bang_residual(&ec.control, b, 1e-6);
    let h = pde.grid().max_spacing();
    check(
        gap <= 1e-8 && bb <= 2.0 * h,
        format!(
            "vi_gap {gap:.2e} (tol 1e-8), bang_bang_residual {bb:.4e} (limit 2h = {:.4e})",
            2.0 * h
        ),
    )
}

fn fit_accuracy() -> Outcome {
    let grid = Grid::unit_interval(256).map_err(err)?;
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, f) in [("x-1/2", 1usize), ("(x-1/2)^2", 2)] {
        let phi = GridFunction::from_fn(&grid, |x: f64, _| (x - 0.5).powi(f as i32));
        let (lo, hi) = default_eps_range(&phi).map_err(err)?;
        let fit = fit_measure_condition(&phi, lo, hi, 20).map_err(err)?;
        let ae = 1.0 / f as f64;
        let good = (fit.exponent - ae).abs() <= 0.05 && (fit.prefactor - 2.0).abs() <= 0.2;
        ok &= good;
        lines.push(format!("{name}: ae {:.4}, K {:.4}", fit.exponent, fit.prefactor));
    }
    check(ok, lines.join("; "))
}

struct Fitted {
    pde: PdeSolver<f64>,
    ec: EvaluatedControl<f64>,
    ae: f64,
    kappa: f64,
    tau: f64,
}

fn fitted(spec: ProblemSpec<f64>) -> Result<Fitted, String> {
    let (pde, ec) = solved(spec)?;
    let (lo, hi) = default_eps_range(&ec.adjoint).map_err(err)?;
    let fit = fit_measure_condition(&ec.adjoint, lo, hi, 20).map_err(err)?;
    let kappa = compute_kappa(&pde.spec().bounds, &fit);
    let tau = default_tau(&fit, pde.grid().measure());
    Ok(Fitted {
        pde,
        ec,
        ae: fit.exponent,
        kappa,
        tau,
    })
}

fn first_order_growth(lq: &Fitted) -> Outcome {
    let g = verify_first_order_growth(&lq.pde, &lq.ec, lq.kappa, lq.ae, 500, 0).map_err(err)?;
    check(
        g.pass_rate >= 0.99,
        format!(
            "pass rate {:.3} over {} samples (ae {:.4}, kappa {:.4})",
            g.pass_rate, g.samples, lq.ae, lq.kappa
        ),
    )
}

fn quadratic_growth(lq: &Fitted) -> Outcome {
    let cone = ConeParams::new(lq.tau).map_err(err)?;
    let ssc = estimate_ssc_delta(&lq.pde, &lq.ec, &cone, 100, 0).map_err(err)?;
    let delta = if ssc.delta_min.is_finite() {
        ssc.delta_min.max(0.0)
    } else {
        0.0
    };
    let q = check_quadratic_growth(&lq.pde, &lq.ec, lq.kappa, lq.ae, delta, 200, 0.1, 0).map_err(err)?;
    check(
        q.pass_rate == 1.0,
        format!(
            "pass rate {:.3} over {} samples (delta_min {delta:.6})",
            q.pass_rate, q.samples
        ),
    )
}

fn holder_stability(lq: &Fitted) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (k, d) in default_directions(lq.pde.grid(), 0).into_iter().enumerate() {
        let plan = SweepPlan::geometric(d, 0.1, 0.5, 8, SolveOptions::default(), 0).map_err(err)?;
        let result = run_sweep(&lq.pde, &lq.ec, &plan).map_err(err)?;
        let fit = fit_holder(&result, lq.ae).map_err(err)?;
        let good = match fit.verdict {
            Verdict::Superstable => true,
            Verdict::Consistent => fit.r2 >= 0.95,
            Verdict::Inconsistent => false,
        };
        ok &= good;
        lines.push(format!(
            "dir {k}: slope {:.4}, R2 {:.4}, {:?}",
            fit.slope, fit.r2, fit.verdict
        ));
    }
    lines.push(format!("threshold {:.4}", 0.9 * lq.ae));
    check(ok, lines.join("; "))
}

fn perturbed_ssc() -> Outcome {
    let cubic = fitted(benchmarks::cubic(benchmarks::CELLS).map_err(err)?)?;
    let cone = ConeParams::new(cubic.tau).map_err(err)?;
    let base = estimate_ssc_delta(&cubic.pde, &cubic.ec, &cone, 100, 0).map_err(err)?;
    if !base.satisfied() {
        return Err(format!("SSC fails at the solution: delta_min {:e}", base.delta_min));
    }
    let mut worst = f64::INFINITY;
    for d in default_directions(cubic.pde.grid(), 0) {
        for n in 0..=5 {
            let e = d.scale(0.1 / 2f64.powi(n));
            let p = check_perturbed_ssc(&cubic.pde, &cubic.ec, &e, &cone, 100, 0).map_err(err)?;
            worst = worst.min(p.delta_min);
        }
    }
    check(
        worst >= 0.5 * base.delta_min,
        format!(
            "min perturbed delta {worst:.6} vs delta_min {:.6} (need >= half)",
            base.delta_min
        ),
    )
}

fn kkt_reduction() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, spec) in [
        (
            "lq",
            benchmarks::linear_quadratic::<f64>(benchmarks::CELLS).map_err(err)?,
        ),
        ("cubic", benchmarks::cubic(benchmarks::CELLS).map_err(err)?),
    ] {
        let pde = PdeSolver::new(spec);
        let opts = SolveOptions {
            seed: 7,
            ..SolveOptions::default()
        };
        let start = pde.spec().bounds.midpoint();
        let plain = solve(&pde, &opts, &start).map_err(err)?;
        let zero = Perturbation::zero(pde.grid());
        let pert = solve_perturbed(&pde, &zero, &opts, &start).map_err(err)?;
        let same =
            plain.records == pert.records && plain.final_point.control.values() == pert.final_point.control.values();
        ok &= same;
        lines.push(format!("{name}: {} iterations, identical = {same}", plain.iterations()));
    }
    check(ok, lines.join("; "))
}

fn run_cli(dir: &Path, config: &Path, threads: usize) -> Result<(), String> {
    for cmd in ["solve", "analyze", "perturb"] {
        let status = Command::new(env!("CARGO_BIN_EXE_bangbang"))
            .args([cmd, "--config"])
            .arg(config)
            .arg("--out")
            .arg(dir)
            .args(["--threads", &threads.to_string(), "--seed", "0"])
            .status()
            .map_err(err)?;
        if status.code() != Some(0) {
            return Err(format!("`{cmd}` exited with {status}"));
        }
    }
    Ok(())
}

fn tree(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(err)?
        .map(|e| {
            let e = e.map_err(err)?;
            Ok((
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).map_err(err)?,
            ))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/lq.toml");
    let tmp = tempfile::tempdir().map_err(err)?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_cli(&a, &config, 1)?;
    run_cli(&b, &config, 4)?;
    let (ta, tb) = (tree(&a)?, tree(&b)?);
    let names: Vec<&str> = ta.iter().map(|f| f.0.as_str()).collect();
    check(
        !ta.is_empty() && ta == tb,
        format!("{} files compared (1 vs 4 threads): {}", ta.len(), names.join(", ")),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, limit: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if took <= limit => (true, d),
            Ok(d) => (false, format!("{d}; over the {}s budget", limit.as_secs())),
            Err(d) => (false, d),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {id:>2} {:<4} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    };
    let s = Duration::from_secs;
    report(1, "gradient fidelity", s(10), &mut gradient_fidelity);
    report(2, "hessian fidelity", s(20), &mut hessian_fidelity);
    report(3, "manufactured convergence", s(5), &mut manufactured_convergence);
    report(4, "bang-bang structure", s(30), &mut bang_bang_structure);
    report(5, "level-set fit accuracy", s(2), &mut fit_accuracy);

    let setup = Instant::now();
    let lq = fitted(benchmarks::linear_quadratic(benchmarks::CELLS).unwrap());
    let setup = setup.elapsed();
    let with_lq = |f: fn(&Fitted) -> Outcome| {
        let lq = &lq;
        move || -> Outcome {
            match lq {
                Ok(lq) => f(lq),
                Err(e) => Err(format!("benchmark setup failed: {e}")),
            }
        }
    };
    // the shared reference solve counts against each budget
    let budget = |secs: u64| s(secs).saturating_sub(setup);
    report(6, "first-order growth", budget(60), &mut with_lq(first_order_growth));
    report(7, "quadratic growth", budget(60), &mut with_lq(quadratic_growth));
    report(8, "hoelder stability", budget(300), &mut with_lq(holder_stability));
    report(9, "perturbed SSC stability", s(120), &mut perturbed_ssc);
    report(10, "KKT reduction consistency", s(30), &mut kkt_reduction);
    report(11, "end-to-end determinism", s(600), &mut determinism);

    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
