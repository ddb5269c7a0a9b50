//! Numerical checks of the optimality theory at a computed solution ū:
//! the level-set condition `|{|φ| <= ε}| <= K ε^æ`, the growth constant κ,
//! first-order and quadratic growth, critical-cone sampling, the coercivity
//! constant δ and the Lipschitz-type constants of the linearized equations.
//!
//! Random samples perturb interior nodes only. Control values on Dirichlet
//! nodes never reach the discrete state equation, so moving them changes
//! `‖u - ū‖` without changing `J`.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, Norm};
use crate::model::{project_admissible, Bounds, Perturbation, DEFAULT_BANG_BANG_TOL};
use crate::objective::{curvature_pair, eval_j, eval_perturbed, value_j, EvaluatedControl};
use crate::pde::PdeSolver;
use crate::rng::{smooth_field, stream, Purpose};
use crate::scalar::Real;
use crate::stats::fit_power_law;

/// Relative slack allowed above the fitted bound `K ε^æ`.
pub const FIT_SLACK: f64 = 0.25;
pub const DEFAULT_FIT_POINTS: usize = 20;
/// τ is where the fitted level-set measure reaches this fraction of `|Ω|`.
pub const TAU_MEASURE_FRACTION: f64 = 0.05;
/// `‖φ‖_∞` at or below this counts as an identically vanishing adjoint.
pub const FLAT_ADJOINT_TOL: f64 = 1e-12;
/// Absolute slack of the growth checks, multiplied by `1 + |J(ū)|`.
pub const GROWTH_SLACK: f64 = 1e-10;

// sub-stream offsets so that each check draws independent samples
const GROWTH_STREAM: u64 = 1 << 32;
const CONE_STREAM: u64 = 2 << 32;
const QUADRATIC_STREAM: u64 = 3 << 32;
const CONSTANTS_STREAM: u64 = 4 << 32;

/// Least-squares fit of `log |{|φ| <= ε}|` against `log ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureFit<T> {
    pub epsilons: Vec<T>,
    pub measures: Vec<T>,
    /// æ; `+∞` when every level set in the range is empty.
    pub exponent: T,
    /// K
    pub prefactor: T,
    pub r2: T,
    /// Smallest and largest ε with nonzero measure.
    pub used_range: (T, T),
    pub degenerate: bool,
}

impl<T: Real> MeasureFit<T> {
    fn degenerate(epsilons: Vec<T>, measures: Vec<T>) -> Self {
        MeasureFit {
            epsilons,
            measures,
            exponent: T::infinity(),
            prefactor: T::zero(),
            r2: T::nan(),
            used_range: (T::nan(), T::nan()),
            degenerate: true,
        }
    }

    /// Fitted bound `K ε^æ` (zero for the degenerate sentinel).
    pub fn bound(&self, eps: T) -> T {
        if self.degenerate {
            T::zero()
        } else {
            self.prefactor * eps.powf(self.exponent)
        }
    }

    /// Whether every used point lies below `K ε^æ (1 + FIT_SLACK)`.
    pub fn bound_holds(&self) -> bool {
        let slack = T::one() + T::lit(FIT_SLACK);
        self.epsilons
            .iter()
            .zip(&self.measures)
            .filter(|(_, &m)| m > T::zero())
            .all(|(&e, &m)| m <= self.bound(e) * slack)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epsilon,measure")?;
        for (e, m) in self.epsilons.iter().zip(&self.measures) {
            writeln!(out, "{e},{m}")?;
        }
        Ok(())
    }
}

/// Default fit range `[10 h, 0.8 ‖φ‖_∞]`.
pub fn default_eps_range<T: Real>(phi: &GridFunction<T>) -> Result<(T, T)> {
    let lo = T::lit(10.0) * phi.grid().max_spacing();
    let hi = T::lit(0.8) * phi.lp_norm(Norm::Inf);
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err(Error::InsufficientData(format!(
            "default ε-range is empty: 10h = {lo} but 0.8‖φ‖∞ = {hi}; refine the grid or set the range"
        )))
    }
}

/// Fits (K, æ) over `n_points` log-spaced ε in `[eps_min, eps_max]`.
pub fn fit_measure_condition<T: Real>(
    phi: &GridFunction<T>,
    eps_min: T,
    eps_max: T,
    n_points: usize,
) -> Result<MeasureFit<T>> {
    if !(eps_min > T::zero() && eps_min < eps_max && eps_max.is_finite()) || n_points < 2 {
        return Err(Error::InvalidArgument(format!(
            "measure fit needs 0 < eps_min < eps_max and at least two points (got {eps_min}, {eps_max}, {n_points})"
        )));
    }
    let (a, b) = (eps_min.ln(), eps_max.ln());
    let last = T::from_usize_lossy(n_points - 1);
    let epsilons: Vec<T> = (0..n_points)
        .map(|i| {
            if i == n_points - 1 {
                eps_max
            } else if i == 0 {
                eps_min
            } else {
                (a + (b - a) * T::from_usize_lossy(i) / last).exp()
            }
        })
        .collect();
    let measures: Vec<T> = epsilons.iter().map(|&e| phi.level_set_measure(e)).collect();
    let used: Vec<(T, T)> = epsilons
        .iter()
        .zip(&measures)
        .filter(|(_, &m)| m > T::zero())
        .map(|(&e, &m)| (e, m))
        .collect();
    if used.is_empty() {
        return Ok(MeasureFit::degenerate(epsilons, measures));
    }
    if used.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "only {} of {n_points} level sets are nonempty; need at least 4",
            used.len()
        )));
    }
    let (xs, ys): (Vec<T>, Vec<T>) = used.iter().copied().unzip();
    let line = fit_power_law(&xs, &ys)?;
    if !(line.slope > T::zero()) {
        return Err(Error::InsufficientData(
            "level-set measure does not grow over the ε-range".into(),
        ));
    }
    Ok(MeasureFit {
        epsilons,
        measures,
        exponent: line.slope,
        prefactor: line.intercept.exp(),
        r2: line.r2,
        used_range: (xs[0], xs[xs.len() - 1]),
        degenerate: false,
    })
}

/// `κ = ½ (2 ‖β - α‖_∞ K)^{-1/æ}`; `½` for the degenerate sentinel.
pub fn compute_kappa<T: Real>(b: &Bounds<T>, fit: &MeasureFit<T>) -> T {
    let half = T::lit(0.5);
    if fit.degenerate || fit.exponent.is_infinite() {
        return half;
    }
    half * (T::lit(2.0) * b.max_gap() * fit.prefactor).powf(-T::one() / fit.exponent)
}

/// The same expression with exponent `+1/æ`, kept for comparison in reports.
pub fn kappa_with_positive_exponent<T: Real>(b: &Bounds<T>, fit: &MeasureFit<T>) -> T {
    let half = T::lit(0.5);
    if fit.degenerate || fit.exponent.is_infinite() {
        return half;
    }
    half * (T::lit(2.0) * b.max_gap() * fit.prefactor).powf(T::one() / fit.exponent)
}

/// τ at which the fitted measure `K τ^æ` equals 5% of `|Ω|`; zero when degenerate.
pub fn default_tau<T: Real>(fit: &MeasureFit<T>, domain_measure: T) -> T {
    if fit.degenerate {
        return T::zero();
    }
    (T::lit(TAU_MEASURE_FRACTION) * domain_measure / fit.prefactor).powf(T::one() / fit.exponent)
}

fn growth_power<T: Real>(ae: T) -> T {
    if ae.is_infinite() {
        T::one()
    } else {
        T::one() + T::one() / ae
    }
}

/// Pass statistics of a sampled inequality `lhs >= rhs - slack`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthCheck<T> {
    pub samples: usize,
    pub passed: usize,
    pub pass_rate: T,
    /// Smallest `lhs / ‖u - ū‖^{power}` over samples with `u ≠ ū`.
    pub worst_ratio: T,
    /// Largest `rhs - lhs` (negative when every sample passes with room).
    pub worst_violation: T,
}

impl<T: Real> GrowthCheck<T> {
    fn collect(results: &[(bool, T, T)]) -> Self {
        let passed = results.iter().filter(|r| r.0).count();
        GrowthCheck {
            samples: results.len(),
            passed,
            pass_rate: if results.is_empty() {
                T::one()
            } else {
                T::from_usize_lossy(passed) / T::from_usize_lossy(results.len())
            },
            worst_ratio: results.iter().map(|r| r.1).fold(T::infinity(), T::min),
            worst_violation: results.iter().map(|r| r.2).fold(T::neg_infinity(), T::max),
        }
    }
}

fn with_values<T: Real>(like: &GridFunction<T>, values: Vec<T>) -> GridFunction<T> {
    GridFunction::new(like.grid().clone(), values).expect("same grid")
}

/// Interior nodes uniform in `[α, β]`, boundary nodes copied from `ub`.
fn uniform_admissible<T: Real, R: Rng>(rng: &mut R, ub: &GridFunction<T>, b: &Bounds<T>) -> GridFunction<T> {
    let g = ub.grid();
    let (lo, hi) = (b.lower().values(), b.upper().values());
    let values = (0..g.node_count())
        .map(|k| {
            if g.is_boundary(k) {
                ub.values()[k]
            } else {
                lo[k] + (hi[k] - lo[k]) * T::lit(rng.gen::<f64>())
            }
        })
        .collect();
    with_values(ub, values)
}

/// `ub` with a random run of interior nodes moved to the opposite bound.
fn window_flip<T: Real, R: Rng>(rng: &mut R, ub: &GridFunction<T>, b: &Bounds<T>) -> GridFunction<T> {
    let g = ub.grid();
    let interior = g.interior();
    let (lo, hi) = (b.lower().values(), b.upper().values());
    let len = rng.gen_range(1..=(interior.len() / 16).max(1));
    let start = rng.gen_range(0..interior.len());
    let mut values = ub.values().to_vec();
    for &k in interior.iter().skip(start).take(len) {
        let u = values[k];
        values[k] = if u == lo[k] {
            hi[k]
        } else if u == hi[k] {
            lo[k]
        } else if rng.gen::<bool>() {
            hi[k]
        } else {
            lo[k]
        };
    }
    with_values(ub, values)
}

fn admissible_sample<T: Real>(seed: u64, index: u64, ub: &GridFunction<T>, b: &Bounds<T>) -> GridFunction<T> {
    let mut rng = stream(seed, Purpose::Analysis, index);
    if index.is_multiple_of(2) {
        uniform_admissible(&mut rng, ub, b)
    } else {
        window_flip(&mut rng, ub, b)
    }
}

/// Samples admissible `u` and checks `J'(ū)(u - ū) >= κ ‖u - ū‖_{L¹}^{1+1/æ} - slack`.
pub fn verify_first_order_growth<T: Real>(
    pde: &PdeSolver<T>,
    ec: &EvaluatedControl<T>,
    kappa: T,
    ae: T,
    n_samples: usize,
    seed: u64,
) -> Result<GrowthCheck<T>> {
    let b = &pde.spec().bounds;
    let power = growth_power(ae);
    let slack = T::lit(GROWTH_SLACK) * (T::one() + ec.value.abs());
    let results: Vec<(bool, T, T)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let u = admissible_sample(seed, GROWTH_STREAM + i as u64, &ec.control, b);
            let d = u.sub(&ec.control)?;
            let lhs = ec.adjoint.inner_product(&d)?;
            let dist = d.lp_norm(Norm::L1).powf(power);
            let rhs = kappa * dist;
            let ratio = if dist > T::zero() { lhs / dist } else { T::infinity() };
            Ok((lhs >= rhs - slack, ratio, rhs - lhs))
        })
        .collect::<Result<_>>()?;
    Ok(GrowthCheck::collect(&results))
}

/// Width τ of the extended critical cone and the tolerance for "at a bound".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeParams<T> {
    pub tau: T,
    pub tol_bb: T,
}

impl<T: Real> ConeParams<T> {
    pub fn new(tau: T) -> Result<Self> {
        if !(tau >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "cone: τ must be nonnegative, got {tau}"
            )));
        }
        Ok(ConeParams {
            tau,
            tol_bb: T::lit(DEFAULT_BANG_BANG_TOL),
        })
    }
}

/// Allowed interval for `v` at each node, `None` where `v` must vanish.
fn cone_intervals<T: Real>(ec: &EvaluatedControl<T>, b: &Bounds<T>, cone: &ConeParams<T>) -> Vec<Option<(T, T)>> {
    let g = ec.control.grid();
    let (lo, hi) = (b.lower().values(), b.upper().values());
    (0..g.node_count())
        .map(|k| {
            if g.is_boundary(k) || ec.adjoint.values()[k].abs() > cone.tau {
                return None;
            }
            let u = ec.control.values()[k];
            let tol = cone.tol_bb * (hi[k] - lo[k]);
            let min = if u - lo[k] <= tol { T::zero() } else { -T::one() };
            let max = if hi[k] - u <= tol { T::zero() } else { T::one() };
            Some((min, max))
        })
        .collect()
}

/// Nodewise membership in the extended critical cone.
pub fn in_cone<T: Real>(ec: &EvaluatedControl<T>, b: &Bounds<T>, cone: &ConeParams<T>, v: &GridFunction<T>) -> bool {
    let g = ec.control.grid();
    let (lo, hi) = (b.lower().values(), b.upper().values());
    v.values().iter().enumerate().all(|(k, &vk)| {
        if vk == T::zero() {
            return true;
        }
        if g.is_boundary(k) || ec.adjoint.values()[k].abs() > cone.tau {
            return false;
        }
        let u = ec.control.values()[k];
        let tol = cone.tol_bb * (hi[k] - lo[k]);
        !(u - lo[k] <= tol && vk < T::zero()) && !(hi[k] - u <= tol && vk > T::zero())
    })
}

#[derive(Debug, Clone)]
pub struct ConeSample<T> {
    pub directions: Vec<GridFunction<T>>,
    pub diagnostic: Option<String>,
}

/// Random unit-L² directions of the extended critical cone.
pub fn sample_critical_cone<T: Real>(
    ec: &EvaluatedControl<T>,
    b: &Bounds<T>,
    cone: &ConeParams<T>,
    n_samples: usize,
    seed: u64,
) -> Result<ConeSample<T>> {
    let intervals = cone_intervals(ec, b, cone);
    let free = intervals
        .iter()
        .filter(|iv| matches!(iv, Some((a, b)) if a < b))
        .count();
    if free == 0 {
        return Ok(ConeSample {
            directions: Vec::new(),
            diagnostic: Some(format!(
                "critical cone is {{0}}: no interior node has |φ| <= τ = {}",
                cone.tau
            )),
        });
    }
    let mut directions = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let mut rng = stream(seed, Purpose::Analysis, CONE_STREAM + i as u64);
        let v = loop {
            let values = intervals
                .iter()
                .map(|iv| match iv {
                    Some((a, b)) => *a + (*b - *a) * T::lit(rng.gen::<f64>()),
                    None => T::zero(),
                })
                .collect();
            let v = with_values(&ec.control, values);
            let n = v.lp_norm(Norm::L2);
            if n > T::zero() {
                break v.scale(T::one() / n);
            }
        };
        if !in_cone(ec, b, cone, &v) {
            return Err(Error::InvalidArgument("cone sample failed its membership check".into()));
        }
        directions.push(v);
    }
    Ok(ConeSample {
        directions,
        diagnostic: None,
    })
}

/// Smallest sampled Rayleigh ratio `J''(ū) v² / ‖z_v‖²` over the cone.
#[derive(Debug, Clone)]
pub struct SSCReport<T> {
    pub samples: usize,
    /// `+∞` when the cone sample is empty.
    pub delta_min: T,
    pub argmin: Option<GridFunction<T>>,
    pub diagnostic: Option<String>,
}

impl<T: Real> SSCReport<T> {
    pub fn satisfied(&self) -> bool {
        self.delta_min > T::zero()
    }
}

fn rayleigh_report<T: Real>(pde: &PdeSolver<T>, at: &EvaluatedControl<T>, cone: ConeSample<T>) -> Result<SSCReport<T>> {
    let ratios: Vec<T> = cone
        .directions
        .par_iter()
        .map(|v| curvature_pair(pde, at, v).map(|(q, zz)| q / zz))
        .collect::<Result<_>>()?;
    let mut best: Option<usize> = None;
    for (i, &r) in ratios.iter().enumerate() {
        if best.is_none_or(|j| r < ratios[j]) {
            best = Some(i);
        }
    }
    Ok(SSCReport {
        samples: ratios.len(),
        delta_min: best.map_or(T::infinity(), |i| ratios[i]),
        argmin: best.map(|i| cone.directions[i].clone()),
        diagnostic: cone.diagnostic,
    })
}

/// Rayleigh ratio of `J''(ū)` for one direction.
pub fn rayleigh_ratio<T: Real>(pde: &PdeSolver<T>, ec: &EvaluatedControl<T>, v: &GridFunction<T>) -> Result<T> {
    let (q, zz) = curvature_pair(pde, ec, v)?;
    Ok(q / zz)
}

pub fn estimate_ssc_delta<T: Real>(
    pde: &PdeSolver<T>,
    ec: &EvaluatedControl<T>,
    cone: &ConeParams<T>,
    n_samples: usize,
    seed: u64,
) -> Result<SSCReport<T>> {
    let sample = sample_critical_cone(ec, &pde.spec().bounds, cone, n_samples, seed)?;
    rayleigh_report(pde, ec, sample)
}

/// Same cone sample as [`estimate_ssc_delta`], with the perturbed second
/// derivative `𝒥''_u(ū, e)` and the linearization at `ū + e_y`.
pub fn check_perturbed_ssc<T: Real>(
    pde: &PdeSolver<T>,
    ec: &EvaluatedControl<T>,
    e: &Perturbation<T>,
    cone: &ConeParams<T>,
    n_samples: usize,
    seed: u64,
) -> Result<SSCReport<T>> {
    let sample = sample_critical_cone(ec, &pde.spec().bounds, cone, n_samples, seed)?;
    let perturbed = eval_perturbed(pde, &ec.control, e)?;
    rayleigh_report(pde, &perturbed, sample)
}

/// Samples admissible `u` with `‖u - ū‖_{L²} <= radius` and checks
/// `J(ū) + κ/2 ‖u - ū‖_{L¹}^{1+1/æ} + δ/8 ‖z_{u-ū}‖² <= J(u) + slack`.
#[allow(clippy::too_many_arguments)]
pub fn check_quadratic_growth<T: Real>(
    pde: &PdeSolver<T>,
    ec: &EvaluatedControl<T>,
    kappa: T,
    ae: T,
    delta: T,
    n_samples: usize,
    radius: T,
    seed: u64,
) -> Result<GrowthCheck<T>> {
    let b = &pde.spec().bounds;
    let power = growth_power(ae);
    let slack = T::lit(GROWTH_SLACK) * (T::one() + ec.value.abs());
    let eighth = T::lit(0.125);
    let results: Vec<(bool, T, T)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let index = QUADRATIC_STREAM + i as u64;
            let raw = admissible_sample(seed, index, &ec.control, b).sub(&ec.control)?;
            let norm = raw.lp_norm(Norm::L2);
            let r = radius * T::lit(stream(seed, Purpose::Analysis, index ^ (1 << 31)).gen::<f64>());
            let d = if norm > r { raw.scale(r / norm) } else { raw };
            let u = project_admissible(&ec.control.add(&d)?, b)?;
            let d = u.sub(&ec.control)?;
            let z = pde.solve_linearized(&ec.state, &d)?;
            let zz = z.lp_norm(Norm::L2).powi(2);
            let l1 = d.lp_norm(Norm::L1).powf(power);
            let ju = value_j(pde, &u)?;
            let lhs = ec.value + kappa / T::lit(2.0) * l1 + delta * eighth * zz;
            let ratio = if l1 > T::zero() {
                (ju - ec.value) / l1
            } else {
                T::infinity()
            };
            Ok((lhs <= ju + slack, ratio, lhs - ju))
        })
        .collect::<Result<_>>()?;
    Ok(GrowthCheck::collect(&results))
}

/// Sampled Lipschitz constants of the state/adjoint map (`C₁`) and of the
/// linearized equation from `L¹` to `L²` (`C₃`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedConstants<T> {
    pub c1: T,
    pub c3: T,
}

/// Discrete stand-in for the `Y` norm: `H¹` seminorm plus sup norm.
pub fn y_norm<T: Real>(f: &GridFunction<T>) -> T {
    f.h1_seminorm() + f.lp_norm(Norm::Inf)
}

fn indicator_or_field<T: Real, R: Rng>(rng: &mut R, like: &GridFunction<T>) -> GridFunction<T> {
    let g = like.grid();
    let width = T::lit(rng.gen_range(0.02..0.3));
    let centers: Vec<T> = g
        .axes()
        .iter()
        .map(|a| a.lo + (a.hi - a.lo) * T::lit(rng.gen::<f64>()))
        .collect();
    let scale: Vec<T> = g.axes().iter().map(|a| a.hi - a.lo).collect();
    let half = T::lit(0.5);
    let v = GridFunction::from_fn(g, |x, y| {
        let inside_x = (x - centers[0]).abs() <= half * width * scale[0];
        let inside_y = centers.len() < 2 || (y - centers[1]).abs() <= half * width * scale[1];
        if inside_x && inside_y {
            T::one()
        } else {
            T::zero()
        }
    });
    if v.lp_norm(Norm::L1) > T::zero() {
        v
    } else {
        smooth_field(g, rng)
    }
}

pub fn estimate_linearized_constants<T: Real>(
    pde: &PdeSolver<T>,
    ec: &EvaluatedControl<T>,
    n_samples: usize,
    seed: u64,
) -> Result<LinearizedConstants<T>> {
    let b = &pde.spec().bounds;
    let gap = b.max_gap();
    let pairs: Vec<(Option<T>, T)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, Purpose::Analysis, CONSTANTS_STREAM + i as u64);
            let field = smooth_field(ec.control.grid(), &mut rng);
            let amplitude = gap * T::lit(rng.gen_range(0.05..1.0)) / field.lp_norm(Norm::Inf);
            let u = project_admissible(&ec.control.axpy(amplitude, &field)?, b)?;
            let du = u.sub(&ec.control)?.lp_norm(Norm::L2);
            let c1 = if du > T::zero() {
                let other = eval_j(pde, &u)?;
                let dy = other.state.sub(&ec.state)?;
                let dphi = other.adjoint.sub(&ec.adjoint)?;
                Some((y_norm(&dy) + y_norm(&dphi)) / du)
            } else {
                None
            };
            let v = if i % 2 == 0 {
                indicator_or_field(&mut rng, &ec.control)
            } else {
                smooth_field(ec.control.grid(), &mut rng)
            };
            let z = pde.solve_linearized(&ec.state, &v)?;
            Ok((c1, z.lp_norm(Norm::L2) / v.lp_norm(Norm::L1)))
        })
        .collect::<Result<_>>()?;
    Ok(LinearizedConstants {
        c1: pairs.iter().filter_map(|p| p.0).fold(T::zero(), T::max),
        c3: pairs.iter().map(|p| p.1).fold(T::zero(), T::max),
    })
}

/// Settings of the full analysis pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSettings<T> {
    pub eps_min: Option<T>,
    pub eps_max: Option<T>,
    pub fit_points: usize,
    pub tau: Option<T>,
    pub tol_bb: T,
    pub growth_samples: usize,
    pub cone_samples: usize,
    pub quadratic_samples: usize,
    pub quadratic_radius: T,
    pub constant_samples: usize,
    pub seed: u64,
}

impl<T: Real> Default for AnalysisSettings<T> {
    fn default() -> Self {
        AnalysisSettings {
            eps_min: None,
            eps_max: None,
            fit_points: DEFAULT_FIT_POINTS,
            tau: None,
            tol_bb: T::lit(DEFAULT_BANG_BANG_TOL),
            growth_samples: 500,
            cone_samples: 100,
            quadratic_samples: 200,
            quadratic_radius: T::lit(0.1),
            constant_samples: 20,
            seed: 0,
        }
    }
}

/// Pass thresholds used by [`Analysis::passed`].
pub const GROWTH_PASS_RATE: f64 = 0.99;
pub const QUADRATIC_PASS_RATE: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct Analysis<T> {
    pub fit: MeasureFit<T>,
    pub kappa: T,
    pub kappa_positive_exponent: T,
    pub tau: T,
    pub ssc: SSCReport<T>,
    pub growth: GrowthCheck<T>,
    pub quadratic: GrowthCheck<T>,
    pub constants: LinearizedConstants<T>,
    pub notes: Vec<String>,
}

impl<T: Real> Analysis<T> {
    pub fn passed(&self) -> bool {
        self.ssc.satisfied()
            && self.growth.pass_rate >= T::lit(GROWTH_PASS_RATE)
            && self.quadratic.pass_rate >= T::lit(QUADRATIC_PASS_RATE)
    }

    pub fn report(&self) -> AnalysisReport {
        let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
        AnalysisReport {
            k: f(self.fit.prefactor),
            ae: f(self.fit.exponent),
            kappa: f(self.kappa),
            tau: f(self.tau),
            delta_min: f(self.ssc.delta_min),
            c1: f(self.constants.c1),
            c3: f(self.constants.c3),
            growth_pass_rate: f(self.growth.pass_rate),
            quadratic_growth_pass_rate: f(self.quadratic.pass_rate),
            kappa_positive_exponent: f(self.kappa_positive_exponent),
            fit_r2: f(self.fit.r2),
            cone_samples: self.ssc.samples,
            passed: self.passed(),
            notes: self.notes.clone(),
        }
    }
}

pub(crate) fn number<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// Serializable summary; non-finite numbers are written as `"inf"`/`"nan"`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    #[serde(rename = "K", serialize_with = "number")]
    pub k: f64,
    #[serde(serialize_with = "number")]
    pub ae: f64,
    #[serde(serialize_with = "number")]
    pub kappa: f64,
    #[serde(serialize_with = "number")]
    pub tau: f64,
    #[serde(serialize_with = "number")]
    pub delta_min: f64,
    #[serde(rename = "C1", serialize_with = "number")]
    pub c1: f64,
    #[serde(rename = "C3", serialize_with = "number")]
    pub c3: f64,
    #[serde(serialize_with = "number")]
    pub growth_pass_rate: f64,
    #[serde(serialize_with = "number")]
    pub quadratic_growth_pass_rate: f64,
    #[serde(serialize_with = "number")]
    pub kappa_positive_exponent: f64,
    #[serde(serialize_with = "number")]
    pub fit_r2: f64,
    pub cone_samples: usize,
    pub passed: bool,
    pub notes: Vec<String>,
}

/// Runs the fit, κ, cone/SSC, growth and constant estimates at `ec`.
pub fn analyze<T: Real>(pde: &PdeSolver<T>, ec: &EvaluatedControl<T>, s: &AnalysisSettings<T>) -> Result<Analysis<T>> {
    let b = &pde.spec().bounds;
    let grid = pde.grid();
    let mut notes = Vec::new();
    let phi = &ec.adjoint;
    let flat = phi.lp_norm(Norm::Inf) <= T::lit(FLAT_ADJOINT_TOL);
    let fit = if flat {
        notes.push("superstable: adjoint vanishes identically, level-set fit skipped and κ set to 0".into());
        MeasureFit::degenerate(Vec::new(), Vec::new())
    } else {
        let (lo, hi) = match (s.eps_min, s.eps_max) {
            (Some(lo), Some(hi)) => (lo, hi),
            (lo, hi) => {
                let (dlo, dhi) = default_eps_range(phi)?;
                (lo.unwrap_or(dlo), hi.unwrap_or(dhi))
            }
        };
        fit_measure_condition(phi, lo, hi, s.fit_points)?
    };
    if fit.degenerate && !fit.epsilons.is_empty() {
        notes.push("every level set in the ε-range is empty: æ reported as +inf".into());
    }
    if !fit.degenerate && !fit.bound_holds() {
        notes.push(format!(
            "some measured level sets exceed K ε^æ by more than {}%",
            FIT_SLACK * 100.0
        ));
    }
    // no first-order growth without a sign pattern in φ
    let kappa = if flat { T::zero() } else { compute_kappa(b, &fit) };
    let tau = s.tau.unwrap_or_else(|| default_tau(&fit, grid.measure()));
    let cone = ConeParams { tau, tol_bb: s.tol_bb };
    let ssc = estimate_ssc_delta(pde, ec, &cone, s.cone_samples, s.seed)?;
    if let Some(d) = &ssc.diagnostic {
        notes.push(d.clone());
    }
    let growth = verify_first_order_growth(pde, ec, kappa, fit.exponent, s.growth_samples, s.seed)?;
    let delta = if ssc.delta_min.is_finite() {
        ssc.delta_min.max(T::zero())
    } else {
        T::zero()
    };
    let quadratic = check_quadratic_growth(
        pde,
        ec,
        kappa,
        fit.exponent,
        delta,
        s.quadratic_samples,
        s.quadratic_radius,
        s.seed,
    )?;
    let constants = estimate_linearized_constants(pde, ec, s.constant_samples, s.seed)?;
    Ok(Analysis {
        kappa_positive_exponent: if flat {
            T::zero()
        } else {
            kappa_with_positive_exponent(b, &fit)
        },
        fit,
        kappa,
        tau,
        ssc,
        growth,
        quadratic,
        constants,
        notes,
    })
}
