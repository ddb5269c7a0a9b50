//! Conditional gradient over the box `α <= u <= β`.
//!
//! The linear subproblem is solved exactly by the sign rule on the adjoint.
//! With [`StepRule::Corrective`] the loop may instead take an away step or a
//! Newton step restricted to the nodes strictly inside the box. Discrete
//! optima typically have a node or two between the bounds near a switching
//! point; the classic scheme converges sublinearly there.

use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::linalg::cholesky_solve;
use crate::model::{bang_bang_residual, project_admissible, Bounds, Perturbation, DEFAULT_BANG_BANG_TOL};
use crate::objective::{curvature_density, curvature_pair, EvaluatedControl, Objective};
use crate::pde::PdeSolver;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Frank–Wolfe steps toward the linearized minimizer only.
    Classic,
    /// Best of Frank–Wolfe, away and free-face Newton steps by predicted
    /// decrease of the local quadratic model; line search starts at the
    /// model minimizer.
    Corrective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions<T> {
    pub max_iters: usize,
    pub gap_tol: T,
    pub armijo_c1: T,
    pub backtrack: T,
    pub max_halvings: usize,
    /// Reserved for randomized tie-breaking; the midpoint rule is deterministic.
    pub seed: u64,
    pub step_rule: StepRule,
    /// Largest free set handled by the face Newton step.
    pub max_face: usize,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        SolveOptions {
            max_iters: 500,
            gap_tol: T::tol(1e-10),
            armijo_c1: T::lit(1e-4),
            backtrack: T::lit(0.5),
            max_halvings: 40,
            seed: 0,
            step_rule: StepRule::Corrective,
            max_face: 32,
        }
    }
}

impl<T: Real> SolveOptions<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "solver: {name} must be positive, got {v}"
                )))
            }
        };
        positive("gap_tol", self.gap_tol)?;
        positive("armijo_c1", self.armijo_c1)?;
        positive("backtrack", self.backtrack)?;
        if self.armijo_c1 >= T::one() || self.backtrack >= T::one() {
            return Err(Error::InvalidArgument(
                "solver: armijo_c1 and backtrack must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the optimization history; `step` is the step that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord<T> {
    pub iter: usize,
    pub value: T,
    pub gap: T,
    pub step: T,
    pub bb_residual: T,
}

#[derive(Debug, Clone)]
pub struct SolveTrace<T> {
    pub records: Vec<IterationRecord<T>>,
    pub final_point: EvaluatedControl<T>,
    pub converged: bool,
}

impl<T: Real> SolveTrace<T> {
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn final_gap(&self) -> T {
        self.records.last().map_or(T::infinity(), |r| r.gap)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,J,gap,step,bb_residual")?;
        for r in &self.records {
            writeln!(out, "{},{},{},{},{}", r.iter, r.value, r.gap, r.step, r.bb_residual)?;
        }
        Ok(())
    }
}

/// Nodewise minimizer of `(φ, v)` over the box: `α` where `φ > 0`, `β` where
/// `φ < 0`, midpoint where `φ = 0`.
pub fn linearized_minimizer<T: Real>(phi: &GridFunction<T>, b: &Bounds<T>) -> GridFunction<T> {
    let values = phi
        .values()
        .iter()
        .zip(b.lower().values().iter().zip(b.upper().values()))
        .map(|(&p, (&lo, &hi))| {
            if p > T::zero() {
                lo
            } else if p < T::zero() {
                hi
            } else {
                (lo + hi) / T::lit(2.0)
            }
        })
        .collect();
    GridFunction::new(phi.grid().clone(), values).expect("same grid")
}

/// `(φ_u, u - v)` with `v` the linearized minimizer; never negative.
pub fn vi_gap<T: Real>(ec: &EvaluatedControl<T>, b: &Bounds<T>) -> T {
    gap_against(&ec.adjoint, &ec.control, &linearized_minimizer(&ec.adjoint, b))
}

fn gap_against<T: Real>(phi: &GridFunction<T>, u: &GridFunction<T>, v: &GridFunction<T>) -> T {
    let g: T = phi
        .values()
        .iter()
        .zip(u.values().iter().zip(v.values()))
        .zip(phi.grid().weights())
        .map(|((&p, (&u, &v)), &w)| w * p * (u - v))
        .sum();
    g.max(T::zero())
}

/// Away vertex restricted to the face of `u`: free nodes move toward the
/// bound the sign rule rejects, nodes on a bound stay put.
fn away_vertex<T: Real>(phi: &GridFunction<T>, u: &GridFunction<T>, b: &Bounds<T>) -> GridFunction<T> {
    let values = phi
        .values()
        .iter()
        .zip(u.values())
        .zip(b.lower().values().iter().zip(b.upper().values()))
        .map(|((&p, &u), (&lo, &hi))| {
            if lo < u && u < hi {
                if p > T::zero() {
                    hi
                } else if p < T::zero() {
                    lo
                } else {
                    u
                }
            } else {
                u
            }
        })
        .collect();
    GridFunction::new(u.grid().clone(), values).expect("same grid")
}

/// Candidate search direction with its quadratic model along the ray.
struct Step<T> {
    direction: Vec<T>,
    max_step: T,
    /// Endpoint at `max_step`, exact at the bounds.
    endpoint: Vec<T>,
    slope: T,
    initial_step: T,
    predicted_decrease: T,
}

impl<T: Real> Step<T> {
    fn new(direction: Vec<T>, max_step: T, endpoint: Vec<T>, slope: T, curvature: Option<T>) -> Self {
        let initial_step = match curvature {
            Some(c) if c > T::zero() => max_step.min(-slope / c),
            _ => max_step,
        };
        let c = curvature.unwrap_or(T::zero());
        let predicted_decrease = -(initial_step * slope + initial_step * initial_step * c / T::lit(2.0));
        Step {
            direction,
            max_step,
            endpoint,
            slope,
            initial_step,
            predicted_decrease,
        }
    }
}

/// Largest step along `d` from `u` that stays in the box, and the endpoint
/// there with the blocking nodes placed exactly on their bounds.
fn ray_to_box<T: Real>(u: &[T], d: &[T], lo: &[T], hi: &[T], cap: T) -> (T, Vec<T>) {
    let room = |i: usize| if d[i] > T::zero() { hi[i] - u[i] } else { lo[i] - u[i] };
    let max_step = (0..u.len())
        .filter(|&i| d[i] != T::zero())
        .fold(cap, |m, i| m.min(room(i) / d[i]));
    let endpoint = (0..u.len())
        .map(|i| {
            if d[i] == T::zero() {
                u[i]
            } else if room(i) / d[i] <= max_step {
                if d[i] > T::zero() {
                    hi[i]
                } else {
                    lo[i]
                }
            } else {
                (u[i] + max_step * d[i]).max(lo[i]).min(hi[i])
            }
        })
        .collect();
    (max_step, endpoint)
}

fn curvature_along<T: Real>(pde: &PdeSolver<T>, ec: &EvaluatedControl<T>, d: &[T]) -> Result<T> {
    let d = GridFunction::new(ec.control.grid().clone(), d.to_vec())?;
    Ok(curvature_pair(pde, ec, &d)?.0)
}

fn frank_wolfe_step<T: Real>(
    pde: &PdeSolver<T>,
    ec: &EvaluatedControl<T>,
    b: &Bounds<T>,
    gap: T,
    with_model: bool,
) -> Result<Step<T>> {
    let v = linearized_minimizer(&ec.adjoint, b).into_values();
    let d: Vec<T> = ec.control.values().iter().zip(&v).map(|(&u, &v)| v - u).collect();
    let curvature = if with_model {
        Some(curvature_along(pde, ec, &d)?)
    } else {
        None
    };
    Ok(Step::new(d, T::one(), v, -gap, curvature))
}

fn away_step<T: Real>(pde: &PdeSolver<T>, ec: &EvaluatedControl<T>, b: &Bounds<T>) -> Result<Option<Step<T>>> {
    let a = away_vertex(&ec.adjoint, &ec.control, b);
    let away_gap = gap_against(&ec.adjoint, &a, &ec.control);
    if !(away_gap > T::zero()) {
        return Ok(None);
    }
    let u = ec.control.values();
    let d: Vec<T> = u.iter().zip(a.values()).map(|(&u, &a)| u - a).collect();
    let (max_step, endpoint) = ray_to_box(u, &d, b.lower().values(), b.upper().values(), T::infinity());
    let curvature = curvature_along(pde, ec, &d)?;
    Ok(Some(Step::new(d, max_step, endpoint, -away_gap, Some(curvature))))
}

/// Newton step on the free interior nodes with all other nodes frozen,
/// clipped to the box. Skipped when the face is large or the reduced
/// Hessian is not positive definite.
fn face_newton_step<T: Real>(
    pde: &PdeSolver<T>,
    ec: &EvaluatedControl<T>,
    b: &Bounds<T>,
    max_face: usize,
) -> Result<Option<Step<T>>> {
    let grid = ec.control.grid();
    let (u, lo, hi) = (ec.control.values(), b.lower().values(), b.upper().values());
    let free: Vec<usize> = grid
        .interior()
        .iter()
        .copied()
        .filter(|&k| lo[k] < u[k] && u[k] < hi[k])
        .collect();
    if free.is_empty() || free.len() > max_face {
        return Ok(None);
    }
    let w = grid.weights();
    let density = curvature_density(pde, ec);
    let mut responses = Vec::with_capacity(free.len());
    for &k in &free {
        let mut e = GridFunction::zeros(grid);
        e.values_mut()[k] = T::one();
        responses.push(pde.solve_linearized(&ec.state, &e)?);
    }
    let n = free.len();
    let mut h = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let hij: T = (0..w.len())
                .map(|k| w[k] * density.values()[k] * (responses[i].values()[k] * responses[j].values()[k]))
                .sum();
            h[i][j] = hij;
            h[j][i] = hij;
        }
    }
    let g: Vec<T> = free.iter().map(|&k| w[k] * ec.adjoint.values()[k]).collect();
    let neg_g: Vec<T> = g.iter().map(|&v| -v).collect();
    let Some(delta) = cholesky_solve(&h, &neg_g) else {
        return Ok(None);
    };
    let slope: T = g.iter().zip(&delta).map(|(&a, &b)| a * b).sum();
    if !(slope < T::zero()) {
        return Ok(None);
    }
    let mut d = vec![T::zero(); u.len()];
    for (&k, &dk) in free.iter().zip(&delta) {
        d[k] = dk;
    }
    let (max_step, endpoint) = ray_to_box(u, &d, lo, hi, T::one());
    Ok(Some(Step::new(d, max_step, endpoint, slope, Some(-slope))))
}

fn choose_step<T: Real>(
    pde: &PdeSolver<T>,
    ec: &EvaluatedControl<T>,
    b: &Bounds<T>,
    opts: &SolveOptions<T>,
    gap: T,
) -> Result<Step<T>> {
    if opts.step_rule == StepRule::Classic {
        return frank_wolfe_step(pde, ec, b, gap, false);
    }
    let mut best = frank_wolfe_step(pde, ec, b, gap, true)?;
    let others = [away_step(pde, ec, b)?, face_newton_step(pde, ec, b, opts.max_face)?];
    for s in others.into_iter().flatten() {
        if s.predicted_decrease > best.predicted_decrease {
            best = s;
        }
    }
    Ok(best)
}

/// Conditional-gradient minimization of `J` from `u0` (projected onto the box).
pub fn solve<T: Real>(pde: &PdeSolver<T>, opts: &SolveOptions<T>, u0: &GridFunction<T>) -> Result<SolveTrace<T>> {
    run(pde, Objective::Reduced, opts, u0)
}

/// Same loop on `𝒥(·, e)`; its fixed points are perturbed KKT points.
pub fn solve_perturbed<T: Real>(
    pde: &PdeSolver<T>,
    e: &Perturbation<T>,
    opts: &SolveOptions<T>,
    u0: &GridFunction<T>,
) -> Result<SolveTrace<T>> {
    e.cost.check_grid(u0)?;
    run(pde, Objective::Perturbed(e), opts, u0)
}

fn run<T: Real>(
    pde: &PdeSolver<T>,
    objective: Objective<'_, T>,
    opts: &SolveOptions<T>,
    u0: &GridFunction<T>,
) -> Result<SolveTrace<T>> {
    opts.validate()?;
    let b = &pde.spec().bounds;
    let bb_tol = T::lit(DEFAULT_BANG_BANG_TOL);
    let mut ec = objective.eval(pde, &project_admissible(u0, b)?)?;
    let mut records = Vec::new();
    let mut step = T::zero();
    let mut converged = false;
    for iter in 0.. {
        let gap = vi_gap(&ec, b);
        records.push(IterationRecord {
            iter,
            value: ec.value,
            gap,
            step,
            bb_residual: bang_bang_residual(&ec.control, b, bb_tol),
        });
        if gap <= opts.gap_tol {
            converged = true;
            break;
        }
        if iter >= opts.max_iters {
            break;
        }
        let s = choose_step(pde, &ec, b, opts, gap)?;
        let (lo, hi) = (b.lower().values(), b.upper().values());
        let u = ec.control.values();
        let mut t = s.initial_step;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = if t == s.max_step {
                s.endpoint.clone()
            } else {
                (0..u.len())
                    .map(|i| (u[i] + t * s.direction[i]).max(lo[i]).min(hi[i]))
                    .collect()
            };
            let trial = GridFunction::new(ec.control.grid().clone(), trial)?;
            let value = objective.value(pde, &trial)?;
            if value <= ec.value + opts.armijo_c1 * t * s.slope {
                accepted = Some(trial);
                break;
            }
            t = t * opts.backtrack;
        }
        match accepted {
            Some(trial) => {
                ec = objective.eval(pde, &trial)?;
                step = t;
            }
            None => break,
        }
    }
    Ok(SolveTrace {
        records,
        final_point: ec,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::{Diffusion, Integrand, Nonlinearity, ProblemSpec};
    use crate::objective::eval_j;

    #[test]
    fn sign_rule_examples() {
        let g = Grid::<f64>::unit_interval(16).unwrap();
        let b = Bounds::constant(&g, -1.0, 1.0).unwrap();
        let phi = GridFunction::from_fn(&g, |x, _| x - 0.5);
        let u = linearized_minimizer(&phi, &b);
        for (k, &v) in u.values().iter().enumerate() {
            let x = g.coords(k)[0];
            let expected = if x < 0.5 {
                1.0
            } else if x > 0.5 {
                -1.0
            } else {
                0.0
            };
            assert_eq!(v, expected);
        }
        let u = linearized_minimizer(&GridFunction::constant(&g, -1.0), &b);
        assert!(u.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn minimizer_beats_every_vertex_nodewise() {
        let g = Grid::<f64>::unit_interval(8).unwrap();
        let b = Bounds::new(
            GridFunction::from_fn(&g, |x, _| -1.0 - x),
            GridFunction::from_fn(&g, |x, _| 0.5 + x * x),
        )
        .unwrap();
        let phi = GridFunction::from_fn(&g, |x, _| (9.0 * x).sin());
        let best = phi.inner_product(&linearized_minimizer(&phi, &b)).unwrap();
        let n = g.node_count();
        for mask in 0..(1u32 << n) {
            let w = GridFunction::new(
                g.clone(),
                (0..n)
                    .map(|k| {
                        if mask >> k & 1 == 1 {
                            b.upper().values()[k]
                        } else {
                            b.lower().values()[k]
                        }
                    })
                    .collect(),
            )
            .unwrap();
            assert!(best <= phi.inner_product(&w).unwrap() + 1e-15);
        }
    }

    fn lq(n: usize) -> PdeSolver<f64> {
        let g = Grid::unit_interval(n).unwrap();
        let yd = GridFunction::from_fn(&g, |x: f64, _| 0.3 * (6.0 * x).sin());
        PdeSolver::new(
            ProblemSpec::new(
                g.clone(),
                Diffusion::Constant(1.0),
                Nonlinearity::Zero,
                Integrand::tracking(yd),
                Bounds::constant(&g, -1.0, 1.0).unwrap(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn iterates_stay_admissible_and_values_decrease() {
        for rule in [StepRule::Classic, StepRule::Corrective] {
            let p = lq(32);
            let opts = SolveOptions {
                max_iters: 60,
                step_rule: rule,
                ..Default::default()
            };
            let trace = solve(&p, &opts, &p.spec().bounds.midpoint()).unwrap();
            for w in trace.records.windows(2) {
                assert!(w[1].value <= w[0].value);
                assert!(w[1].gap >= 0.0);
            }
            assert!(p.spec().bounds.contains(&trace.final_point.control));
        }
    }

    #[test]
    fn gap_vanishes_exactly_on_sign_consistent_controls() {
        let p = lq(12);
        let b = &p.spec().bounds;
        let trace = solve(&p, &SolveOptions::default(), &b.midpoint()).unwrap();
        assert!(trace.converged);
        let ec = &trace.final_point;
        let g = p.grid();
        for k in 0..g.node_count() {
            let (phi, u) = (ec.adjoint.values()[k], ec.control.values()[k]);
            if phi > 1e-9 {
                assert_eq!(u, -1.0);
            } else if phi < -1e-9 {
                assert_eq!(u, 1.0);
            }
        }
        // restarting at the solution converges immediately
        let again = solve(&p, &SolveOptions::default(), &ec.control).unwrap();
        assert!(again.converged && again.iterations() <= 1);
    }

    #[test]
    fn zero_budget_keeps_initial_record() {
        let p = lq(16);
        let opts = SolveOptions {
            max_iters: 0,
            ..Default::default()
        };
        let trace = solve(&p, &opts, &p.spec().bounds.midpoint()).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert!(!trace.converged);
        let mut csv = Vec::new();
        trace.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv)
            .unwrap()
            .starts_with("iter,J,gap,step,bb_residual\n0,"));
    }

    #[test]
    fn zero_perturbation_reproduces_unperturbed_trace() {
        let p = lq(32);
        let opts = SolveOptions::default();
        let u0 = p.spec().bounds.midpoint();
        let a = solve(&p, &opts, &u0).unwrap();
        let b = solve_perturbed(&p, &Perturbation::zero(p.grid()), &opts, &u0).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_point.control, b.final_point.control);
        let c = solve(&p, &opts, &u0).unwrap();
        assert_eq!(a.records, c.records);
    }

    #[test]
    fn vi_gap_is_nonnegative_for_arbitrary_controls() {
        let p = lq(16);
        let g = p.grid().clone();
        for c in [-1.0, -0.3, 0.0, 0.8] {
            let u = GridFunction::from_fn(&g, |x, _| (c + x).clamp(-1.0, 1.0));
            assert!(vi_gap(&eval_j(&p, &u).unwrap(), &p.spec().bounds) >= 0.0);
        }
    }

    #[test]
    fn rejects_bad_options() {
        let p = lq(8);
        let opts = SolveOptions {
            gap_tol: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            solve(&p, &opts, &p.spec().bounds.midpoint()),
            Err(Error::InvalidArgument(_))
        ));
    }
}
