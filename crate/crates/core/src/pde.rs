//! Finite-difference solves for the state, linearized, second-order and
//! adjoint equations.
//!
//! `A = -div(a ∇·)` is discretized by the 3-point (1D) or 5-point (2D)
//! stencil on interior nodes with face coefficients `(a_k + a_l) / 2`. The
//! assembled matrix is symmetric, so the adjoint equation reuses it.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Norm};
use crate::linalg::{pcg, CsrMatrix};
use crate::model::{Perturbation, ProblemSpec};
use crate::scalar::Real;

/// Newton and CG controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings<T> {
    /// Absolute tolerance on the quadrature-weighted residual.
    pub newton_tol: T,
    pub max_newton: usize,
    pub max_halvings: usize,
    pub cg_rel_tol: T,
    /// CG iteration cap as a multiple of the node count.
    pub cg_iter_factor: usize,
}

impl<T: Real> Default for SolverSettings<T> {
    fn default() -> Self {
        SolverSettings {
            newton_tol: T::tol(1e-10),
            max_newton: 50,
            max_halvings: 30,
            cg_rel_tol: T::tol(1e-12),
            cg_iter_factor: 10,
        }
    }
}

/// Assembled discrete elliptic operator on interior nodes.
#[derive(Debug, Clone)]
pub struct EllipticOperator<T> {
    grid: Arc<Grid<T>>,
    matrix: CsrMatrix<T>,
}

impl<T: Real> EllipticOperator<T> {
    pub fn assemble(spec: &ProblemSpec<T>) -> Self {
        let grid = Arc::clone(&spec.grid);
        let two = T::lit(2.0);
        let interior = grid.interior();
        let mut rows = Vec::with_capacity(interior.len());
        for &k in interior {
            let (i, j) = grid.lattice(k);
            let a_k = spec.diffusion.at(k);
            let mut row = Vec::with_capacity(5);
            let mut diag = T::zero();
            for (axis, ax) in grid.axes().iter().enumerate() {
                let h2 = ax.spacing() * ax.spacing();
                let neighbours = if axis == 0 {
                    [grid.node(i - 1, j), grid.node(i + 1, j)]
                } else {
                    [grid.node(i, j - 1), grid.node(i, j + 1)]
                };
                for l in neighbours {
                    let face = (a_k + spec.diffusion.at(l)) / two / h2;
                    diag = diag + face;
                    if let Some(slot) = grid.interior_slot(l) {
                        row.push((slot, -face));
                    }
                }
            }
            row.push((grid.interior_slot(k).unwrap(), diag));
            rows.push(row);
        }
        EllipticOperator {
            grid,
            matrix: CsrMatrix::from_rows(rows),
        }
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    fn restrict(&self, f: &GridFunction<T>) -> Vec<T> {
        self.grid.interior().iter().map(|&k| f.values()[k]).collect()
    }

    fn extend(&self, interior_values: &[T]) -> GridFunction<T> {
        let mut out = vec![T::zero(); self.grid.node_count()];
        for (&k, &v) in self.grid.interior().iter().zip(interior_values) {
            out[k] = v;
        }
        GridFunction::new(Arc::clone(&self.grid), out).expect("length matches grid")
    }

    /// `A y` at the interior nodes (boundary values are taken as given).
    fn apply(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); y.len()];
        self.matrix.mul_shifted(None, y, &mut out);
        out
    }
}

/// Result of a semilinear state solve.
#[derive(Debug, Clone)]
pub struct StateSolveReport<T> {
    pub state: GridFunction<T>,
    pub newton_iterations: usize,
    pub residual: T,
    pub converged: bool,
}

/// Discrete PDE solver for one problem instance, caching the assembled operator.
#[derive(Debug, Clone)]
pub struct PdeSolver<T> {
    spec: ProblemSpec<T>,
    operator: EllipticOperator<T>,
    settings: SolverSettings<T>,
}

impl<T: Real> PdeSolver<T> {
    pub fn new(spec: ProblemSpec<T>) -> Self {
        Self::with_settings(spec, SolverSettings::default())
    }

    pub fn with_settings(spec: ProblemSpec<T>, settings: SolverSettings<T>) -> Self {
        let operator = EllipticOperator::assemble(&spec);
        PdeSolver {
            spec,
            operator,
            settings,
        }
    }

    pub fn spec(&self) -> &ProblemSpec<T> {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.spec.grid
    }

    pub fn operator(&self) -> &EllipticOperator<T> {
        &self.operator
    }

    pub fn settings(&self) -> &SolverSettings<T> {
        &self.settings
    }

    fn check(&self, f: &GridFunction<T>) -> Result<()> {
        if f.grid().as_ref() == self.spec.grid.as_ref() {
            Ok(())
        } else {
            Err(Error::IncompatibleGrids)
        }
    }

    fn cg_cap(&self) -> usize {
        self.settings.cg_iter_factor * self.spec.grid.node_count()
    }

    fn weighted_norm(&self, r: &[T]) -> T {
        let w = self.spec.grid.weights();
        self.spec
            .grid
            .interior()
            .iter()
            .zip(r)
            .map(|(&k, &v)| w[k] * v * v)
            .sum::<T>()
            .sqrt()
    }

    fn residual(&self, y: &[T], rhs: &[T]) -> Vec<T> {
        let f = &self.spec.nonlinearity;
        let mut r = self.operator.apply(y);
        for i in 0..r.len() {
            r[i] = r[i] + f.value(y[i]) - rhs[i];
        }
        r
    }

    /// `∂f/∂y(y)` on interior nodes, or `None` when it vanishes identically.
    fn shift(&self, y: &GridFunction<T>) -> Option<Vec<T>> {
        let f = &self.spec.nonlinearity;
        if matches!(f, crate::model::Nonlinearity::Zero) {
            return None;
        }
        Some(self.spec.grid.interior().iter().map(|&k| f.dy(y.values()[k])).collect())
    }

    /// Solves `(A + ∂f/∂y(y)) x = b` with zero boundary values.
    fn linear_solve(&self, y: &GridFunction<T>, b: &[T], stage: &'static str) -> Result<GridFunction<T>> {
        let shift = self.shift(y);
        let (x, _) = pcg(
            self.operator.matrix(),
            shift.as_deref(),
            b,
            self.settings.cg_rel_tol,
            self.cg_cap(),
        )
        .map_err(|e| match e {
            Error::SolverFailure { detail, .. } => Error::solver(stage, detail),
            other => other,
        })?;
        Ok(self.operator.extend(&x))
    }

    /// Damped Newton for `A y + f(y) = rhs`, `y = 0` on the boundary, from `y = 0`.
    pub fn solve_state(&self, rhs: &GridFunction<T>) -> Result<StateSolveReport<T>> {
        self.check(rhs)?;
        let s = &self.settings;
        let f = &self.spec.nonlinearity;
        let b = self.operator.restrict(rhs);
        let mut y = vec![T::zero(); b.len()];
        let mut r = self.residual(&y, &b);
        let mut r_norm = self.weighted_norm(&r);
        let mut iterations = 0;
        while r_norm > s.newton_tol {
            if iterations == s.max_newton {
                return Err(Error::solver(
                    "newton",
                    format!("no convergence in {} iterations (residual {r_norm})", s.max_newton),
                ));
            }
            iterations += 1;
            let shift: Vec<T> = y.iter().map(|&v| f.dy(v)).collect();
            let neg_r: Vec<T> = r.iter().map(|&v| -v).collect();
            let (delta, _) = pcg(
                self.operator.matrix(),
                Some(&shift),
                &neg_r,
                s.cg_rel_tol,
                self.cg_cap(),
            )
            .map_err(|e| Error::solver("newton", e.to_string()))?;
            let mut t = T::one();
            let mut accepted = false;
            for _ in 0..=s.max_halvings {
                let trial: Vec<T> = y.iter().zip(&delta).map(|(&a, &d)| a + t * d).collect();
                let r_trial = self.residual(&trial, &b);
                let n_trial = self.weighted_norm(&r_trial);
                if n_trial < r_norm {
                    y = trial;
                    r = r_trial;
                    r_norm = n_trial;
                    accepted = true;
                    break;
                }
                t = t / T::lit(2.0);
            }
            if !accepted {
                return Err(Error::solver(
                    "newton",
                    format!("line search stalled at residual {r_norm}"),
                ));
            }
        }
        Ok(StateSolveReport {
            state: self.operator.extend(&y),
            newton_iterations: iterations,
            residual: r_norm,
            converged: true,
        })
    }

    /// Quadrature-weighted residual of `A y + f(y) - rhs` for a given `y`.
    pub fn state_residual(&self, y: &GridFunction<T>, rhs: &GridFunction<T>) -> Result<T> {
        self.check(y)?;
        self.check(rhs)?;
        let r = self.residual(&self.operator.restrict(y), &self.operator.restrict(rhs));
        Ok(self.weighted_norm(&r))
    }

    /// `z = G'(u) v`: solves `A z + ∂f/∂y(y) z = v`.
    pub fn solve_linearized(&self, y: &GridFunction<T>, v: &GridFunction<T>) -> Result<GridFunction<T>> {
        self.check(y)?;
        self.check(v)?;
        self.linear_solve(y, &self.operator.restrict(v), "linearized")
    }

    /// `w = G''(u)(v1, v2)`: solves `A w + ∂f/∂y(y) w = -∂²f/∂y²(y) z1 z2`.
    pub fn solve_second_order(
        &self,
        y: &GridFunction<T>,
        z1: &GridFunction<T>,
        z2: &GridFunction<T>,
    ) -> Result<GridFunction<T>> {
        self.check(y)?;
        self.check(z1)?;
        self.check(z2)?;
        let f = &self.spec.nonlinearity;
        let b: Vec<T> = self
            .spec
            .grid
            .interior()
            .iter()
            .map(|&k| -f.dyy(y.values()[k]) * (z1.values()[k] * z2.values()[k]))
            .collect();
        self.linear_solve(y, &b, "second-order")
    }

    /// Adjoint solve with an arbitrary right-hand side `g`.
    pub fn solve_adjoint_with_rhs(&self, y: &GridFunction<T>, g: &GridFunction<T>) -> Result<GridFunction<T>> {
        self.check(y)?;
        self.check(g)?;
        self.linear_solve(y, &self.operator.restrict(g), "adjoint")
    }

    /// `φ_u`: solves `A φ + ∂f/∂y(y) φ = ∂L/∂y(y)`.
    pub fn solve_adjoint(&self, y: &GridFunction<T>) -> Result<GridFunction<T>> {
        self.check(y)?;
        let l = &self.spec.integrand;
        let b: Vec<T> = self
            .spec
            .grid
            .interior()
            .iter()
            .map(|&k| l.dy(k, y.values()[k]))
            .collect();
        self.linear_solve(y, &b, "adjoint")
    }

    /// `φ_{u,e}`: adjoint with `e_J` added to the right-hand side.
    pub fn solve_perturbed_adjoint(&self, y: &GridFunction<T>, cost: &GridFunction<T>) -> Result<GridFunction<T>> {
        self.check(y)?;
        self.check(cost)?;
        let l = &self.spec.integrand;
        let b: Vec<T> = self
            .spec
            .grid
            .interior()
            .iter()
            .map(|&k| l.dy(k, y.values()[k]) + cost.values()[k])
            .collect();
        self.linear_solve(y, &b, "adjoint")
    }

    /// Right-hand side `u + e_y` of the perturbed state equation.
    pub fn perturbed_rhs(&self, u: &GridFunction<T>, e: &Perturbation<T>) -> Result<GridFunction<T>> {
        u.add(&e.state)
    }

    /// `‖w‖_∞` where `A w = max(‖α‖_∞, ‖β‖_∞)`; bounds `‖y_u‖_∞` for every
    /// admissible `u` by the discrete comparison principle.
    pub fn uniform_state_bound(&self) -> Result<T> {
        let b = &self.spec.bounds;
        let m = b.lower().lp_norm(Norm::Inf).max(b.upper().lp_norm(Norm::Inf));
        let rhs = vec![m; self.spec.grid.interior().len()];
        let (w, _) = pcg(
            self.operator.matrix(),
            None,
            &rhs,
            self.settings.cg_rel_tol,
            self.cg_cap(),
        )?;
        Ok(w.iter().fold(T::zero(), |acc, v| acc.max(v.abs())))
    }
}

pub fn solve_state<T: Real>(spec: &ProblemSpec<T>, rhs: &GridFunction<T>) -> Result<StateSolveReport<T>> {
    PdeSolver::new(spec.clone()).solve_state(rhs)
}

pub fn solve_linearized<T: Real>(
    spec: &ProblemSpec<T>,
    y: &GridFunction<T>,
    v: &GridFunction<T>,
) -> Result<GridFunction<T>> {
    PdeSolver::new(spec.clone()).solve_linearized(y, v)
}

pub fn solve_second_order<T: Real>(
    spec: &ProblemSpec<T>,
    y: &GridFunction<T>,
    z1: &GridFunction<T>,
    z2: &GridFunction<T>,
) -> Result<GridFunction<T>> {
    PdeSolver::new(spec.clone()).solve_second_order(y, z1, z2)
}

pub fn solve_adjoint<T: Real>(spec: &ProblemSpec<T>, y: &GridFunction<T>) -> Result<GridFunction<T>> {
    PdeSolver::new(spec.clone()).solve_adjoint(y)
}

pub fn solve_perturbed_adjoint<T: Real>(
    spec: &ProblemSpec<T>,
    y: &GridFunction<T>,
    cost: &GridFunction<T>,
) -> Result<GridFunction<T>> {
    PdeSolver::new(spec.clone()).solve_perturbed_adjoint(y, cost)
}
