//! Manufactured test problems on `Ω = (0, 1)` with bounds `-1 <= u <= 1`.
//!
//! The tracking target is built from a prescribed control, state and adjoint:
//! the control switches from `-1` to `1` at `x = 1/2`, the adjoint is the cubic
//! `c x (1 - x) (1/2 - x)`, and `y_d = ȳ + a φ̄''`. Central differences are exact
//! for the cubic adjoint and for the piecewise quadratic state when the switch
//! sits on a node, so for an even number of cells the discrete optimum is known
//! in closed form: `∓1` away from the switch and the midpoint `0` at the switch
//! node and on the boundary.

use std::sync::Arc;

use crate::error::Result;
use crate::grid::{Grid, GridFunction};
use crate::model::{Bounds, Diffusion, Integrand, Nonlinearity, ProblemSpec};
use crate::scalar::Real;

pub const DIFFUSION: f64 = 0.03;
pub const ADJOINT_AMPLITUDE: f64 = 20.0;
pub const SWITCH: f64 = 0.5;
pub const CELLS: usize = 512;
pub const CUBIC_COEFFICIENT: f64 = 1.0;

/// Optimal control of the linear-quadratic benchmark (continuous version).
pub fn control(x: f64) -> f64 {
    if x < SWITCH {
        -1.0
    } else if x > SWITCH {
        1.0
    } else {
        0.0
    }
}

/// Optimal state of the linear-quadratic benchmark.
pub fn state(x: f64) -> f64 {
    let t = x - SWITCH;
    let left = -SWITCH * SWITCH / 2.0;
    let right = (1.0 - SWITCH) * (1.0 - SWITCH) / 2.0;
    (-0.5 * t * t.abs() + left * (1.0 - x) + right * x) / DIFFUSION
}

/// Optimal adjoint of the linear-quadratic benchmark.
pub fn adjoint(x: f64) -> f64 {
    ADJOINT_AMPLITUDE * x * (1.0 - x) * (SWITCH - x)
}

/// Tracking target `ȳ + a φ̄''`.
pub fn target(x: f64) -> f64 {
    state(x) + DIFFUSION * ADJOINT_AMPLITUDE * (6.0 * x - 2.0 - 2.0 * SWITCH)
}

/// Exact discrete optimum of [`linear_quadratic`] for an even cell count.
pub fn discrete_control<T: Real>(grid: &Arc<Grid<T>>) -> GridFunction<T> {
    let mut u = GridFunction::from_fn(grid, |x: T, _| T::lit(control(x.to_f64().unwrap())));
    for k in 0..grid.node_count() {
        if grid.is_boundary(k) {
            u.values_mut()[k] = T::zero();
        }
    }
    u
}

fn build<T: Real>(cells: usize, nonlinearity: Nonlinearity<T>) -> Result<ProblemSpec<T>> {
    let grid = Grid::unit_interval(cells)?;
    let yd = GridFunction::from_fn(&grid, |x: T, _| T::lit(target(x.to_f64().unwrap())));
    ProblemSpec::new(
        grid.clone(),
        Diffusion::Constant(T::lit(DIFFUSION)),
        nonlinearity,
        Integrand::tracking(yd),
        Bounds::constant(&grid, -T::one(), T::one())?,
    )
}

/// `f = 0`, tracking cost, known optimum.
pub fn linear_quadratic<T: Real>(cells: usize) -> Result<ProblemSpec<T>> {
    build(cells, Nonlinearity::Zero)
}

/// Same data with `f(y) = y³`.
pub fn cubic<T: Real>(cells: usize) -> Result<ProblemSpec<T>> {
    build(cells, Nonlinearity::Cubic(T::lit(CUBIC_COEFFICIENT)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Norm;
    use crate::pde::PdeSolver;

    #[test]
    fn prescribed_triple_solves_the_discrete_system() {
        let pde = PdeSolver::new(linear_quadratic::<f64>(64).unwrap());
        let g = pde.grid().clone();
        let u = discrete_control(&g);
        let y = pde.solve_state(&u).unwrap().state;
        let y_exact = GridFunction::from_fn(&g, |x: f64, _| state(x));
        assert!(y.sub(&y_exact).unwrap().lp_norm(Norm::Inf) < 1e-10);
        let phi = pde.solve_adjoint(&y).unwrap();
        let phi_exact = GridFunction::from_fn(&g, |x: f64, _| adjoint(x));
        assert!(phi.sub(&phi_exact).unwrap().lp_norm(Norm::Inf) < 1e-10);
    }

    #[test]
    fn sign_rule_holds_for_the_prescribed_adjoint() {
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            let p = adjoint(x);
            if p > 0.0 {
                assert_eq!(control(x), -1.0);
            } else if p < 0.0 {
                assert_eq!(control(x), 1.0);
            }
        }
    }
}
