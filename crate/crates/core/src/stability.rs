//! Perturbation sweeps: solve `min 𝒥(·, t d)` along a shrinking ladder of
//! scales `t`, record how far the perturbed solutions move from ū, and fit
//! the Hölder exponent of `‖u_e - ū‖_{L¹} <= ϱ ‖e‖_E^æ`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::number;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Norm};
use crate::model::Perturbation;
use crate::objective::{eval_perturbed, EvaluatedControl};
use crate::optimizer::{solve_perturbed, SolveOptions};
use crate::pde::PdeSolver;
use crate::rng::{smooth_field, stream, Purpose};
use crate::scalar::Real;
use crate::stats::fit_power_law;
use std::sync::Arc;

pub const DEFAULT_T0: f64 = 0.1;
pub const DEFAULT_RATIO: f64 = 0.5;
pub const DEFAULT_RUNGS: usize = 8;
/// A sweep is consistent when its slope is at least this fraction of æ.
pub const VERDICT_FRACTION: f64 = 0.9;
pub const MIN_FIT_POINTS: usize = 4;
pub const DEFAULT_PROBES: usize = 20;
/// `‖e‖_E` of each probe in [`measure_adjoint_constant`].
pub const PROBE_SIZE: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct SweepPlan<T> {
    /// Unit direction `d`, or zero for a null sweep.
    pub direction: Perturbation<T>,
    /// Strictly decreasing positive scales.
    pub scales: Vec<T>,
    pub options: SolveOptions<T>,
    pub seed: u64,
}

impl<T: Real> SweepPlan<T> {
    pub fn new(direction: Perturbation<T>, scales: Vec<T>, options: SolveOptions<T>, seed: u64) -> Result<Self> {
        let n = direction.norm_e();
        if !(direction.is_zero() || (n - T::one()).abs() <= T::lit(1e-10)) {
            return Err(Error::InvalidArgument(format!(
                "sweep: direction must have ‖d‖_E = 1 (or be zero), got {n}"
            )));
        }
        if scales.is_empty() || scales.iter().any(|t| !(*t > T::zero() && t.is_finite())) {
            return Err(Error::InvalidArgument(
                "sweep: scales must be positive and finite".into(),
            ));
        }
        if scales.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument(
                "sweep: scales must be strictly decreasing".into(),
            ));
        }
        options.validate()?;
        Ok(SweepPlan {
            direction,
            scales,
            options,
            seed,
        })
    }

    /// Ladder `t0, t0 r, …, t0 r^{rungs-1}`.
    pub fn geometric(
        direction: Perturbation<T>,
        t0: T,
        ratio: T,
        rungs: usize,
        options: SolveOptions<T>,
        seed: u64,
    ) -> Result<Self> {
        if !(ratio > T::zero() && ratio < T::one()) {
            return Err(Error::InvalidArgument(format!(
                "sweep: ratio must lie in (0, 1), got {ratio}"
            )));
        }
        let scales = (0..rungs).map(|i| t0 * ratio.powi(i as i32)).collect();
        Self::new(direction, scales, options, seed)
    }
}

fn unit_field<T: Real>(grid: &Arc<Grid<T>>, seed: u64, index: u64) -> GridFunction<T> {
    let f = smooth_field(grid, &mut stream(seed, Purpose::Sweep, index));
    let n = f.lp_norm(Norm::L2);
    f.scale(T::one() / n)
}

/// `(d_J, 0)`, `(0, d_y)` and `(d_J/2, d_y/2)` with unit smooth fields `d_J`, `d_y`.
pub fn default_directions<T: Real>(grid: &Arc<Grid<T>>, seed: u64) -> Vec<Perturbation<T>> {
    let cost = unit_field(grid, seed, 0);
    let state = unit_field(grid, seed, 1);
    let zero = GridFunction::zeros(grid);
    let half = T::lit(0.5);
    vec![
        Perturbation {
            cost: cost.clone(),
            state: zero.clone(),
        },
        Perturbation {
            cost: zero,
            state: state.clone(),
        },
        Perturbation {
            cost: cost.scale(half),
            state: state.scale(half),
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord<T> {
    pub t: T,
    pub norm_e: T,
    pub dist_l1: T,
    pub dist_l2: T,
    pub gap: T,
    pub iters: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResult<T> {
    /// One record per scale in plan order, then the `t = 0` reference.
    pub records: Vec<SweepRecord<T>>,
    /// Perturbed solutions, aligned with `records`.
    pub solutions: Vec<GridFunction<T>>,
    /// Scales whose solve returned an error, with the message.
    pub failed: Vec<(T, String)>,
}

impl<T: Real> SweepResult<T> {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,norm_e,dist_l1,dist_l2,gap,iters")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.t, r.norm_e, r.dist_l1, r.dist_l2, r.gap, r.iters
            )?;
        }
        Ok(())
    }

    /// Records of scales that did not converge.
    pub fn flagged(&self) -> impl Iterator<Item = &SweepRecord<T>> {
        self.records.iter().filter(|r| !r.converged)
    }
}

fn sweep_point<T: Real>(
    pde: &PdeSolver<T>,
    ub: &GridFunction<T>,
    e: &Perturbation<T>,
    t: T,
    opts: &SolveOptions<T>,
) -> Result<(SweepRecord<T>, GridFunction<T>)> {
    let trace = solve_perturbed(pde, e, opts, ub)?;
    let d = trace.final_point.control.sub(ub)?;
    let record = SweepRecord {
        t,
        norm_e: e.norm_e(),
        dist_l1: d.lp_norm(Norm::L1),
        dist_l2: d.lp_norm(Norm::L2),
        gap: trace.final_gap(),
        iters: trace.iterations(),
        converged: trace.converged,
    };
    Ok((record, trace.final_point.control))
}

/// Solves the perturbed problem at every scale, warm-started at ū.
pub fn run_sweep<T: Real>(pde: &PdeSolver<T>, ec: &EvaluatedControl<T>, plan: &SweepPlan<T>) -> Result<SweepResult<T>> {
    let ub = &ec.control;
    let mut opts = plan.options.clone();
    opts.seed = plan.seed;
    let mut scales = plan.scales.clone();
    scales.push(T::zero());
    let outcomes: Vec<Result<(SweepRecord<T>, GridFunction<T>)>> = scales
        .par_iter()
        .map(|&t| sweep_point(pde, ub, &plan.direction.scale(t), t, &opts))
        .collect();
    let mut result = SweepResult {
        records: Vec::new(),
        solutions: Vec::new(),
        failed: Vec::new(),
    };
    for (t, outcome) in scales.iter().zip(outcomes) {
        match outcome {
            Ok((r, u)) => {
                result.records.push(r);
                result.solutions.push(u);
            }
            Err(err) => result.failed.push((*t, err.to_string())),
        }
    }
    if !result.records.iter().any(|r| r.converged && r.t > T::zero()) {
        return Err(Error::SweepFailure(format!(
            "no perturbed solve converged ({} errors, {} unconverged)",
            result.failed.len(),
            result.flagged().count()
        )));
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    /// The solution did not move at the probed scales.
    Superstable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderFit<T> {
    pub slope: T,
    /// ϱ
    pub prefactor: T,
    pub r2: T,
    pub verdict: Verdict,
    pub points: usize,
}

impl<T: Real> HolderFit<T> {
    pub fn summary(&self) -> HolderSummary {
        let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
        HolderSummary {
            slope: f(self.slope),
            prefactor: f(self.prefactor),
            r2: f(self.r2),
            verdict: self.verdict,
        }
    }
}

/// JSON form `{slope, prefactor, r2, verdict}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderSummary {
    #[serde(serialize_with = "number")]
    pub slope: f64,
    #[serde(serialize_with = "number")]
    pub prefactor: f64,
    #[serde(serialize_with = "number")]
    pub r2: f64,
    pub verdict: Verdict,
}

/// Fits `log dist_l1` against `log ‖e‖_E` over converged records.
///
/// With fewer than four moving points the sweep is superstable when some
/// perturbed solution coincides with ū, and insufficient otherwise.
pub fn fit_holder<T: Real>(result: &SweepResult<T>, ae_expected: T) -> Result<HolderFit<T>> {
    let usable: Vec<&SweepRecord<T>> = result
        .records
        .iter()
        .filter(|r| r.converged && r.t > T::zero())
        .collect();
    let moving: Vec<&&SweepRecord<T>> = usable
        .iter()
        .filter(|r| r.dist_l1 > T::zero() && r.norm_e > T::zero())
        .collect();
    if moving.len() < MIN_FIT_POINTS {
        if usable.iter().any(|r| r.dist_l1.is_zero()) {
            return Ok(HolderFit {
                slope: T::nan(),
                prefactor: T::nan(),
                r2: T::nan(),
                verdict: Verdict::Superstable,
                points: 0,
            });
        }
        return Err(Error::InsufficientData(format!(
            "Hölder fit needs {MIN_FIT_POINTS} converged scales with nonzero distance, found {}",
            moving.len()
        )));
    }
    let xs: Vec<T> = moving.iter().map(|r| r.norm_e).collect();
    let ys: Vec<T> = moving.iter().map(|r| r.dist_l1).collect();
    let line = fit_power_law(&xs, &ys)?;
    let verdict = if line.slope >= T::lit(VERDICT_FRACTION) * ae_expected {
        Verdict::Consistent
    } else {
        Verdict::Inconsistent
    };
    Ok(HolderFit {
        slope: line.slope,
        prefactor: line.intercept.exp(),
        r2: line.r2,
        verdict,
        points: moving.len(),
    })
}

fn probe<T: Real>(grid: &Arc<Grid<T>>, seed: u64, i: u64) -> Perturbation<T> {
    let field = unit_field(grid, seed, (1 << 32) + i);
    let zero = GridFunction::zeros(grid);
    let size = T::lit(PROBE_SIZE);
    match i % 3 {
        0 => Perturbation {
            cost: field.scale(size),
            state: zero,
        },
        1 => Perturbation {
            cost: zero,
            state: field.scale(size),
        },
        _ => {
            let other = unit_field(grid, seed, (2 << 32) + i);
            let half = size * T::lit(0.5);
            Perturbation {
                cost: field.scale(half),
                state: other.scale(half),
            }
        }
    }
}

/// Largest `‖φ_{ū,e} - φ_ū‖_∞ / ‖e‖_E` over `n_probes` probes cycling
/// through cost, state and mixed directions.
pub fn measure_adjoint_constant<T: Real>(
    pde: &PdeSolver<T>,
    ec: &EvaluatedControl<T>,
    n_probes: usize,
    seed: u64,
) -> Result<T> {
    let ratios: Vec<T> = (0..n_probes as u64)
        .into_par_iter()
        .map(|i| {
            let e = probe(pde.grid(), seed, i);
            let perturbed = eval_perturbed(pde, &ec.control, &e)?;
            Ok(perturbed.adjoint.sub(&ec.adjoint)?.lp_norm(Norm::Inf) / e.norm_e())
        })
        .collect::<Result<_>>()?;
    Ok(ratios.into_iter().fold(T::zero(), T::max))
}

/// Constants entering [`kkt_distance_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityConstants<T> {
    pub kappa: T,
    pub ae: T,
    pub delta: T,
    /// Adjoint perturbation constant `c`.
    pub c: T,
    /// Locality radius η in `L²`.
    pub eta: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktDistance<T> {
    /// `κ/2 ‖u_e - ū‖_{L¹}^{1+1/æ} + δ/8 ‖z_{u_e - ū}‖²`
    pub lhs: T,
    /// `c ‖e‖_E ‖u_e - ū‖_{L¹}`
    pub rhs: T,
    /// `ϱ = 2c/κ`
    pub rho: T,
}

impl<T: Real> KktDistance<T> {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// Evaluates both sides of the distance estimate for a perturbed KKT point.
pub fn kkt_distance_check<T: Real>(
    pde: &PdeSolver<T>,
    ec: &EvaluatedControl<T>,
    u_e: &GridFunction<T>,
    e: &Perturbation<T>,
    k: &StabilityConstants<T>,
) -> Result<KktDistance<T>> {
    let d = u_e.sub(&ec.control)?;
    let radius = d.lp_norm(Norm::L2);
    if radius > k.eta {
        return Err(Error::OutOfNeighborhood {
            distance: radius.to_f64().unwrap_or(f64::NAN),
            radius: k.eta.to_f64().unwrap_or(f64::NAN),
        });
    }
    let l1 = d.lp_norm(Norm::L1);
    let power = if k.ae.is_infinite() {
        T::one()
    } else {
        T::one() + T::one() / k.ae
    };
    let z = pde.solve_linearized(&ec.state, &d)?;
    let zz = z.lp_norm(Norm::L2).powi(2);
    Ok(KktDistance {
        lhs: k.kappa / T::lit(2.0) * l1.powf(power) + k.delta * T::lit(0.125) * zz,
        rhs: k.c * e.norm_e() * l1,
        rho: T::lit(2.0) * k.c / k.kappa,
    })
}
