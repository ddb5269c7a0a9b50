//! Problem instances: diffusion coefficient, nonlinearity, integrand, bounds
//! and additive perturbations.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Norm};
use crate::scalar::Real;

/// Default relative tolerance for deciding that a control sits on a bound.
pub const DEFAULT_BANG_BANG_TOL: f64 = 1e-6;

/// Monotone state nonlinearity `f(y)` with exact derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity<T> {
    Zero,
    /// `c * y`
    Linear(T),
    /// `c * y^3`
    Cubic(T),
    /// `c * (y + y^3 / 3)`
    Saturating(T),
}

impl<T: Real> Nonlinearity<T> {
    pub fn coefficient(&self) -> T {
        match *self {
            Nonlinearity::Zero => T::zero(),
            Nonlinearity::Linear(c) | Nonlinearity::Cubic(c) | Nonlinearity::Saturating(c) => c,
        }
    }

    fn validate(&self) -> Result<()> {
        let c = self.coefficient();
        if !(c >= T::zero() && c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "nonlinearity coefficient must be finite and >= 0, got {c}"
            )));
        }
        Ok(())
    }

    pub fn value(&self, y: T) -> T {
        let three = T::lit(3.0);
        match *self {
            Nonlinearity::Zero => T::zero(),
            Nonlinearity::Linear(c) => c * y,
            Nonlinearity::Cubic(c) => c * y * y * y,
            Nonlinearity::Saturating(c) => c * (y + y * y * y / three),
        }
    }

    pub fn dy(&self, y: T) -> T {
        let three = T::lit(3.0);
        match *self {
            Nonlinearity::Zero => T::zero(),
            Nonlinearity::Linear(c) => c,
            Nonlinearity::Cubic(c) => three * c * y * y,
            Nonlinearity::Saturating(c) => c * (T::one() + y * y),
        }
    }

    pub fn dyy(&self, y: T) -> T {
        let two = T::lit(2.0);
        match *self {
            Nonlinearity::Zero | Nonlinearity::Linear(_) => T::zero(),
            Nonlinearity::Cubic(c) => T::lit(6.0) * c * y,
            Nonlinearity::Saturating(c) => two * c * y,
        }
    }

    /// True when the second derivative vanishes identically.
    pub fn is_affine(&self) -> bool {
        matches!(self, Nonlinearity::Zero | Nonlinearity::Linear(_))
    }
}

/// Cost integrand `L(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Integrand<T> {
    /// `½ (y - y_d)²`
    Tracking { target: GridFunction<T> },
    /// `½ (y - y_d)² + w y`
    TrackingPlusLinear {
        target: GridFunction<T>,
        weight: GridFunction<T>,
    },
}

impl<T: Real> Integrand<T> {
    pub fn tracking(target: GridFunction<T>) -> Self {
        Integrand::Tracking { target }
    }

    pub fn target(&self) -> &GridFunction<T> {
        match self {
            Integrand::Tracking { target } | Integrand::TrackingPlusLinear { target, .. } => target,
        }
    }

    fn linear_weight(&self, k: usize) -> T {
        match self {
            Integrand::Tracking { .. } => T::zero(),
            Integrand::TrackingPlusLinear { weight, .. } => weight.values()[k],
        }
    }

    /// `L(x_k, y)`
    pub fn value(&self, k: usize, y: T) -> T {
        let d = y - self.target().values()[k];
        d * d / T::lit(2.0) + self.linear_weight(k) * y
    }

    /// `∂L/∂y(x_k, y)`
    pub fn dy(&self, k: usize, y: T) -> T {
        y - self.target().values()[k] + self.linear_weight(k)
    }

    /// `∂²L/∂y²`, identically one for both families.
    pub fn dyy(&self, _k: usize, _y: T) -> T {
        T::one()
    }

    fn grids(&self) -> Vec<&Arc<Grid<T>>> {
        match self {
            Integrand::Tracking { target } => vec![target.grid()],
            Integrand::TrackingPlusLinear { target, weight } => vec![target.grid(), weight.grid()],
        }
    }
}

/// Pointwise control bounds `α <= u <= β`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds<T> {
    lower: GridFunction<T>,
    upper: GridFunction<T>,
}

impl<T: Real> Bounds<T> {
    pub fn new(lower: GridFunction<T>, upper: GridFunction<T>) -> Result<Self> {
        lower.check_grid(&upper)?;
        if let Some(k) = lower.values().iter().zip(upper.values()).position(|(a, b)| !(a <= b)) {
            let [x, y] = lower.grid().coords(k);
            return Err(Error::InvalidArgument(format!(
                "bounds: lower exceeds upper at node {k} ({x}, {y})"
            )));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn constant(grid: &Arc<Grid<T>>, lower: T, upper: T) -> Result<Self> {
        Self::new(GridFunction::constant(grid, lower), GridFunction::constant(grid, upper))
    }

    pub fn lower(&self) -> &GridFunction<T> {
        &self.lower
    }

    pub fn upper(&self) -> &GridFunction<T> {
        &self.upper
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        self.lower.grid()
    }

    /// `(α + β) / 2`
    pub fn midpoint(&self) -> GridFunction<T> {
        self.lower
            .zip_map(&self.upper, |a, b| (a + b) / T::lit(2.0))
            .expect("bounds share a grid")
    }

    /// `‖β - α‖_∞`
    pub fn max_gap(&self) -> T {
        self.upper
            .sub(&self.lower)
            .expect("bounds share a grid")
            .lp_norm(Norm::Inf)
    }

    pub fn contains(&self, u: &GridFunction<T>) -> bool {
        u.same_grid(&self.lower)
            && u.values()
                .iter()
                .zip(self.lower.values().iter().zip(self.upper.values()))
                .all(|(v, (a, b))| a <= v && v <= b)
    }
}

/// Nodewise clamp of `u` into `[α, β]`.
pub fn project_admissible<T: Real>(u: &GridFunction<T>, b: &Bounds<T>) -> Result<GridFunction<T>> {
    u.check_grid(b.lower())?;
    let values = u
        .values()
        .iter()
        .zip(b.lower().values().iter().zip(b.upper().values()))
        .map(|(&v, (&lo, &hi))| v.max(lo).min(hi))
        .collect();
    GridFunction::new(Arc::clone(u.grid()), values)
}

/// Measure of the set where `u` is strictly between the bounds, i.e. where
/// `min(u - α, β - u) > tol · (β - α)`.
pub fn bang_bang_residual<T: Real>(u: &GridFunction<T>, b: &Bounds<T>, tol: T) -> T {
    u.values()
        .iter()
        .zip(b.lower().values().iter().zip(b.upper().values()))
        .zip(u.grid().weights())
        .filter(|((&v, (&lo, &hi)), _)| (v - lo).min(hi - v) > tol * (hi - lo))
        .map(|(_, &w)| w)
        .sum()
}

/// Diffusion coefficient `a` of `A = -div(a ∇·)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Diffusion<T> {
    Constant(T),
    Field(GridFunction<T>),
}

impl<T: Real> Diffusion<T> {
    pub fn at(&self, k: usize) -> T {
        match self {
            Diffusion::Constant(a) => *a,
            Diffusion::Field(f) => f.values()[k],
        }
    }

    /// Uniform ellipticity constant `min a`.
    pub fn min_value(&self) -> T {
        match self {
            Diffusion::Constant(a) => *a,
            Diffusion::Field(f) => f.values().iter().fold(T::infinity(), |m, &v| m.min(v)),
        }
    }
}

/// A complete problem instance on one grid.
#[derive(Debug, Clone)]
pub struct ProblemSpec<T> {
    pub grid: Arc<Grid<T>>,
    pub diffusion: Diffusion<T>,
    pub nonlinearity: Nonlinearity<T>,
    pub integrand: Integrand<T>,
    pub bounds: Bounds<T>,
}

impl<T: Real> ProblemSpec<T> {
    pub fn new(
        grid: Arc<Grid<T>>,
        diffusion: Diffusion<T>,
        nonlinearity: Nonlinearity<T>,
        integrand: Integrand<T>,
        bounds: Bounds<T>,
    ) -> Result<Self> {
        let a_min = diffusion.min_value();
        if !(a_min > T::zero() && a_min.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "diffusion must be positive everywhere, min is {a_min}"
            )));
        }
        if let Diffusion::Field(f) = &diffusion {
            if f.grid().as_ref() != grid.as_ref() {
                return Err(Error::IncompatibleGrids);
            }
        }
        nonlinearity.validate()?;
        let on_grid = |g: &Arc<Grid<T>>| g.as_ref() == grid.as_ref();
        if !integrand.grids().into_iter().all(on_grid) || !on_grid(bounds.grid()) {
            return Err(Error::IncompatibleGrids);
        }
        Ok(ProblemSpec {
            grid,
            diffusion,
            nonlinearity,
            integrand,
            bounds,
        })
    }

    /// Same instance with a different nonlinearity.
    pub fn with_nonlinearity(&self, nonlinearity: Nonlinearity<T>) -> Result<Self> {
        nonlinearity.validate()?;
        Ok(ProblemSpec {
            nonlinearity,
            ..self.clone()
        })
    }
}

/// Additive perturbation `e = (e_J, e_y)` of the cost and state equation.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation<T> {
    /// Perturbation of the cost, `e_J`.
    pub cost: GridFunction<T>,
    /// Perturbation of the state right-hand side, `e_y`.
    pub state: GridFunction<T>,
}

impl<T: Real> Perturbation<T> {
    pub fn new(cost: GridFunction<T>, state: GridFunction<T>) -> Result<Self> {
        cost.check_grid(&state)?;
        Ok(Perturbation { cost, state })
    }

    pub fn zero(grid: &Arc<Grid<T>>) -> Self {
        Perturbation {
            cost: GridFunction::zeros(grid),
            state: GridFunction::zeros(grid),
        }
    }

    /// `‖e_J‖_{L²} + ‖e_y‖_{L²}`
    pub fn norm_e(&self) -> T {
        self.cost.lp_norm(Norm::L2) + self.state.lp_norm(Norm::L2)
    }

    pub fn scale(&self, t: T) -> Self {
        Perturbation {
            cost: self.cost.scale(t),
            state: self.state.scale(t),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.cost.values().iter().all(|v| v.is_zero()) && self.state.values().iter().all(|v| v.is_zero())
    }
}

/// Free-function form of [`Perturbation::norm_e`] that validates the grids.
pub fn norm_e<T: Real>(e: &Perturbation<T>) -> Result<T> {
    e.cost.check_grid(&e.state)?;
    Ok(e.norm_e())
}
