//! Reduced cost `J(u) = ∫ L(x, y_u)`, its perturbed variant
//! `𝒥(u, e) = J(u + e_y) + (e_J, y_{u+e_y})`, and their discrete derivatives.
//!
//! Derivatives are those of the discrete system: with a symmetric stiffness
//! matrix and uniform interior quadrature weights, pairing the adjoint with a
//! direction is exactly the derivative of the quadrature cost.

use crate::error::Result;
use crate::grid::{GridFunction, Norm};
use crate::model::Perturbation;
use crate::pde::PdeSolver;
use crate::scalar::Real;

/// Control together with its state, adjoint and cost value.
///
/// For perturbed evaluations `state` is `y_{u+e_y}`, `adjoint` is `φ_{u,e}`
/// and `value` is `𝒥(u, e)`.
#[derive(Debug, Clone)]
pub struct EvaluatedControl<T> {
    pub control: GridFunction<T>,
    pub state: GridFunction<T>,
    pub adjoint: GridFunction<T>,
    pub value: T,
    pub newton_iterations: usize,
    pub state_residual: T,
    pub perturbation: Option<Perturbation<T>>,
}

fn cost_value<T: Real>(pde: &PdeSolver<T>, y: &GridFunction<T>) -> T {
    let l = &pde.spec().integrand;
    y.values()
        .iter()
        .zip(y.grid().weights())
        .enumerate()
        .map(|(k, (&v, &w))| w * l.value(k, v))
        .sum()
}

/// Solves state and adjoint at `u` and integrates the cost.
pub fn eval_j<T: Real>(pde: &PdeSolver<T>, u: &GridFunction<T>) -> Result<EvaluatedControl<T>> {
    let report = pde.solve_state(u)?;
    let adjoint = pde.solve_adjoint(&report.state)?;
    let value = cost_value(pde, &report.state);
    Ok(EvaluatedControl {
        control: u.clone(),
        state: report.state,
        adjoint,
        value,
        newton_iterations: report.newton_iterations,
        state_residual: report.residual,
        perturbation: None,
    })
}

/// `J(u)` only (no adjoint solve).
pub fn value_j<T: Real>(pde: &PdeSolver<T>, u: &GridFunction<T>) -> Result<T> {
    let report = pde.solve_state(u)?;
    Ok(cost_value(pde, &report.state))
}

/// `J'(u) v = ∫ φ_u v`.
pub fn grad_pairing<T: Real>(ec: &EvaluatedControl<T>, v: &GridFunction<T>) -> Result<T> {
    ec.adjoint.inner_product(v)
}

/// Pointwise `∂²L/∂y² - φ ∂²f/∂y²` at the evaluated state.
pub fn curvature_density<T: Real>(pde: &PdeSolver<T>, ec: &EvaluatedControl<T>) -> GridFunction<T> {
    let spec = pde.spec();
    let y = ec.state.values();
    let phi = ec.adjoint.values();
    let values = (0..y.len())
        .map(|k| spec.integrand.dyy(k, y[k]) - phi[k] * spec.nonlinearity.dyy(y[k]))
        .collect();
    GridFunction::new(ec.state.grid().clone(), values).expect("same grid")
}

fn weighted_triple<T: Real>(f: &GridFunction<T>, a: &GridFunction<T>, b: &GridFunction<T>) -> T {
    f.values()
        .iter()
        .zip(a.values().iter().zip(b.values()))
        .zip(f.grid().weights())
        .map(|((&f, (&a, &b)), &w)| w * f * (a * b))
        .sum()
}

/// `J''(u)(v1, v2) = ∫ (∂²L/∂y² - φ_u ∂²f/∂y²) z_{v1} z_{v2}`.
pub fn hessian_form<T: Real>(
    pde: &PdeSolver<T>,
    ec: &EvaluatedControl<T>,
    v1: &GridFunction<T>,
    v2: &GridFunction<T>,
) -> Result<T> {
    let z1 = pde.solve_linearized(&ec.state, v1)?;
    let z2 = pde.solve_linearized(&ec.state, v2)?;
    Ok(weighted_triple(&curvature_density(pde, ec), &z1, &z2))
}

/// `(J''(u) v², ‖z_v‖²_{L²})` from a single linearized solve.
pub fn curvature_pair<T: Real>(pde: &PdeSolver<T>, ec: &EvaluatedControl<T>, v: &GridFunction<T>) -> Result<(T, T)> {
    let z = pde.solve_linearized(&ec.state, v)?;
    let q = weighted_triple(&curvature_density(pde, ec), &z, &z);
    let n = z.lp_norm(Norm::L2);
    Ok((q, n * n))
}

/// Evaluates `𝒥(u, e)` with the perturbed adjoint `φ_{u,e}`.
pub fn eval_perturbed<T: Real>(
    pde: &PdeSolver<T>,
    u: &GridFunction<T>,
    e: &Perturbation<T>,
) -> Result<EvaluatedControl<T>> {
    let rhs = pde.perturbed_rhs(u, e)?;
    let report = pde.solve_state(&rhs)?;
    let adjoint = pde.solve_perturbed_adjoint(&report.state, &e.cost)?;
    let value = cost_value(pde, &report.state) + e.cost.inner_product(&report.state)?;
    Ok(EvaluatedControl {
        control: u.clone(),
        state: report.state,
        adjoint,
        value,
        newton_iterations: report.newton_iterations,
        state_residual: report.residual,
        perturbation: Some(e.clone()),
    })
}

/// `𝒥(u, e)` only.
pub fn value_perturbed<T: Real>(pde: &PdeSolver<T>, u: &GridFunction<T>, e: &Perturbation<T>) -> Result<T> {
    let report = pde.solve_state(&pde.perturbed_rhs(u, e)?)?;
    Ok(cost_value(pde, &report.state) + e.cost.inner_product(&report.state)?)
}

/// `𝒥''_u(u, e)(v1, v2) = J''(u + e_y)(v1, v2) + (e_J, G''(u + e_y)(v1, v2))`.
pub fn perturbed_hessian_form<T: Real>(
    pde: &PdeSolver<T>,
    u: &GridFunction<T>,
    e: &Perturbation<T>,
    v1: &GridFunction<T>,
    v2: &GridFunction<T>,
) -> Result<T> {
    let shifted = eval_j(pde, &pde.perturbed_rhs(u, e)?)?;
    perturbed_hessian_at(pde, &shifted, e, v1, v2)
}

/// [`perturbed_hessian_form`] reusing an evaluation of `J` at `u + e_y`.
pub fn perturbed_hessian_at<T: Real>(
    pde: &PdeSolver<T>,
    shifted: &EvaluatedControl<T>,
    e: &Perturbation<T>,
    v1: &GridFunction<T>,
    v2: &GridFunction<T>,
) -> Result<T> {
    let z1 = pde.solve_linearized(&shifted.state, v1)?;
    let z2 = pde.solve_linearized(&shifted.state, v2)?;
    let base = weighted_triple(&curvature_density(pde, shifted), &z1, &z2);
    if pde.spec().nonlinearity.is_affine() {
        return Ok(base);
    }
    let w = pde.solve_second_order(&shifted.state, &z1, &z2)?;
    Ok(base + e.cost.inner_product(&w)?)
}

/// Objective driven by the optimizer: `J` or `𝒥(·, e)`.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a, T> {
    Reduced,
    Perturbed(&'a Perturbation<T>),
}

impl<T: Real> Objective<'_, T> {
    pub fn eval(&self, pde: &PdeSolver<T>, u: &GridFunction<T>) -> Result<EvaluatedControl<T>> {
        match self {
            Objective::Reduced => eval_j(pde, u),
            Objective::Perturbed(e) => eval_perturbed(pde, u, e),
        }
    }

    pub fn value(&self, pde: &PdeSolver<T>, u: &GridFunction<T>) -> Result<T> {
        match self {
            Objective::Reduced => value_j(pde, u),
            Objective::Perturbed(e) => value_perturbed(pde, u, e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::{Bounds, Diffusion, Integrand, Nonlinearity, ProblemSpec};
    use std::f64::consts::PI;

    fn pde(n: usize, f: Nonlinearity<f64>, target: impl Fn(f64) -> f64) -> PdeSolver<f64> {
        let g = Grid::unit_interval(n).unwrap();
        let yd = GridFunction::from_fn(&g, |x, _| target(x));
        PdeSolver::new(
            ProblemSpec::new(
                g.clone(),
                Diffusion::Constant(1.0),
                f,
                Integrand::tracking(yd),
                Bounds::constant(&g, -1.0, 1.0).unwrap(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn cost_of_unit_control() {
        let p = pde(64, Nonlinearity::Zero, |_| 0.0);
        let ec = eval_j(&p, &GridFunction::constant(p.grid(), 1.0)).unwrap();
        assert!((ec.value - 1.0 / 240.0).abs() < 1e-5, "{}", ec.value);
        let again = eval_j(&p, &GridFunction::constant(p.grid(), 1.0)).unwrap();
        assert_eq!(ec.value.to_bits(), again.value.to_bits());
    }

    #[test]
    fn exact_tracking_has_zero_cost_and_gradient() {
        let g = Grid::<f64>::unit_interval(32).unwrap();
        let base = pde(32, Nonlinearity::Cubic(1.0), |_| 0.0);
        let u = GridFunction::from_fn(&g, |x, _| (3.0 * x).sin());
        let y = base.solve_state(&u).unwrap().state;
        let spec = ProblemSpec::new(
            g.clone(),
            Diffusion::Constant(1.0),
            Nonlinearity::Cubic(1.0),
            Integrand::tracking(y),
            Bounds::constant(&g, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        let p = PdeSolver::new(spec);
        let ec = eval_j(&p, &u).unwrap();
        assert_eq!(ec.value, 0.0);
        let v = GridFunction::from_fn(&g, |x, _| x);
        assert_eq!(grad_pairing(&ec, &v).unwrap(), 0.0);
        assert_eq!(grad_pairing(&ec, &GridFunction::zeros(&g)).unwrap(), 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let p = pde(64, Nonlinearity::Cubic(1.0), |x| (2.0 * PI * x).sin());
        let g = p.grid().clone();
        let u = GridFunction::from_fn(&g, |x, _| 4.0 * (3.0 * x).cos());
        let v = GridFunction::from_fn(&g, |x, _| x * x - 0.3);
        let ec = eval_j(&p, &u).unwrap();
        let h = 1e-5;
        let fd = (value_j(&p, &u.axpy(h, &v).unwrap()).unwrap() - value_j(&p, &u.axpy(-h, &v).unwrap()).unwrap())
            / (2.0 * h);
        let exact = grad_pairing(&ec, &v).unwrap();
        assert!((fd - exact).abs() <= 1e-6 * exact.abs(), "{fd} {exact}");
    }

    #[test]
    fn hessian_matches_gradient_differences_and_is_symmetric() {
        let p = pde(64, Nonlinearity::Cubic(1.0), |x| (2.0 * PI * x).sin());
        let g = p.grid().clone();
        let u = GridFunction::from_fn(&g, |x, _| 6.0 * (3.0 * x).cos());
        let v = GridFunction::from_fn(&g, |x, _| 1.0 + x);
        let w = GridFunction::from_fn(&g, |x, _| (7.0 * x).sin());
        let ec = eval_j(&p, &u).unwrap();
        let h = 1e-4;
        let plus = eval_j(&p, &u.axpy(h, &v).unwrap()).unwrap();
        let minus = eval_j(&p, &u.axpy(-h, &v).unwrap()).unwrap();
        let fd = (grad_pairing(&plus, &v).unwrap() - grad_pairing(&minus, &v).unwrap()) / (2.0 * h);
        let exact = hessian_form(&p, &ec, &v, &v).unwrap();
        assert!((fd - exact).abs() <= 1e-5 * exact.abs(), "{fd} {exact}");

        let a = hessian_form(&p, &ec, &v, &w).unwrap();
        let b = hessian_form(&p, &ec, &w, &v).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
    }

    #[test]
    fn affine_state_equation_gives_nonnegative_curvature() {
        for f in [Nonlinearity::Zero, Nonlinearity::Linear(3.0)] {
            let p = pde(32, f, |x| x);
            let g = p.grid().clone();
            let ec = eval_j(&p, &GridFunction::constant(&g, 0.5)).unwrap();
            let v = GridFunction::from_fn(&g, |x, _| (5.0 * x).sin());
            let (q, zz) = curvature_pair(&p, &ec, &v).unwrap();
            assert!(q >= 0.0);
            assert!((q - zz).abs() <= 1e-14 * zz);
        }
    }

    #[test]
    fn perturbed_evaluation_reduces_to_unperturbed() {
        let p = pde(32, Nonlinearity::Cubic(1.0), |x| (PI * x).sin());
        let g = p.grid().clone();
        let u = GridFunction::from_fn(&g, |x, _| 2.0 * x - 1.0);
        let zero = Perturbation::zero(&g);
        let a = eval_j(&p, &u).unwrap();
        let b = eval_perturbed(&p, &u, &zero).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.adjoint, b.adjoint);

        let v = GridFunction::from_fn(&g, |x, _| x);
        let h1 = hessian_form(&p, &a, &v, &v).unwrap();
        let h2 = perturbed_hessian_form(&p, &u, &zero, &v, &v).unwrap();
        assert!((h1 - h2).abs() <= 1e-12 * h1.abs());

        // e_J = 0: value is J(u + e_y)
        let ey = GridFunction::from_fn(&g, |x, _| 0.3 * (2.0 * x).cos());
        let e = Perturbation::new(GridFunction::zeros(&g), ey.clone()).unwrap();
        let shifted = eval_j(&p, &u.add(&ey).unwrap()).unwrap();
        assert_eq!(
            eval_perturbed(&p, &u, &e).unwrap().value.to_bits(),
            shifted.value.to_bits()
        );
    }

    #[test]
    fn perturbed_gradient_matches_central_differences() {
        let p = pde(64, Nonlinearity::Cubic(1.0), |x| (2.0 * PI * x).sin());
        let g = p.grid().clone();
        let e = Perturbation::new(
            GridFunction::from_fn(&g, |x, _| 0.5 * (4.0 * x).sin()),
            GridFunction::from_fn(&g, |x, _| 2.0 * x),
        )
        .unwrap();
        let u = GridFunction::from_fn(&g, |x, _| 4.0 * (3.0 * x).cos());
        let v = GridFunction::from_fn(&g, |x, _| (x - 0.4).abs());
        let ec = eval_perturbed(&p, &u, &e).unwrap();
        let h = 1e-5;
        let fd = (value_perturbed(&p, &u.axpy(h, &v).unwrap(), &e).unwrap()
            - value_perturbed(&p, &u.axpy(-h, &v).unwrap(), &e).unwrap())
            / (2.0 * h);
        let exact = grad_pairing(&ec, &v).unwrap();
        assert!((fd - exact).abs() <= 1e-6 * exact.abs(), "{fd} {exact}");
    }

    #[test]
    fn perturbed_hessian_symmetry_and_affine_case() {
        let p = pde(32, Nonlinearity::Cubic(2.0), |x| (PI * x).sin());
        let g = p.grid().clone();
        let u = GridFunction::from_fn(&g, |x, _| 5.0 * (2.0 * x).cos());
        let e = Perturbation::new(
            GridFunction::from_fn(&g, |x, _| 0.4 * x),
            GridFunction::from_fn(&g, |x, _| 0.2 * (3.0 * x).sin()),
        )
        .unwrap();
        let v1 = GridFunction::from_fn(&g, |x, _| x - 0.5);
        let v2 = GridFunction::from_fn(&g, |x, _| (6.0 * x).cos());
        let a = perturbed_hessian_form(&p, &u, &e, &v1, &v2).unwrap();
        let b = perturbed_hessian_form(&p, &u, &e, &v2, &v1).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs());

        let lin = pde(32, Nonlinearity::Linear(1.0), |x| x);
        let shifted = eval_j(&lin, &u.add(&e.state).unwrap()).unwrap();
        let plain = hessian_form(&lin, &shifted, &v1, &v2).unwrap();
        let pert = perturbed_hessian_form(&lin, &u, &e, &v1, &v2).unwrap();
        assert_eq!(plain, pert);
    }

    #[test]
    fn perturbed_evaluation_carries_the_perturbed_curvature() {
        let p = pde(32, Nonlinearity::Cubic(2.0), |x| (PI * x).sin());
        let g = p.grid().clone();
        let u = GridFunction::from_fn(&g, |x, _| 5.0 * (2.0 * x).cos());
        let e = Perturbation::new(
            GridFunction::from_fn(&g, |x, _| 0.4 * x),
            GridFunction::from_fn(&g, |x, _| 0.2 * (3.0 * x).sin()),
        )
        .unwrap();
        let v = GridFunction::from_fn(&g, |x, _| (6.0 * x).cos());
        let at = eval_perturbed(&p, &u, &e).unwrap();
        let a = hessian_form(&p, &at, &v, &v).unwrap();
        let b = perturbed_hessian_form(&p, &u, &e, &v, &v).unwrap();
        assert!((a - b).abs() <= 1e-8 * b.abs(), "{a} vs {b}");
    }
}
