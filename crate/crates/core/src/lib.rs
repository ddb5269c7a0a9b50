#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Bang-bang optimal control of semilinear elliptic equations.
//!
//! The crate discretizes `A y + f(y) = u` on boxes in one or two dimensions,
//! minimizes `J(u) = ∫ L(x, y_u)` over pointwise bounds by conditional
//! gradients, and checks growth, second-order and stability estimates for
//! the computed solutions under additive perturbations.

pub mod analysis;
pub mod benchmarks;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod optimizer;
pub mod pde;
pub mod rng;
pub mod scalar;
pub mod stability;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{Grid, GridFunction, Norm};
pub use model::{Bounds, Diffusion, Integrand, Nonlinearity, Perturbation, ProblemSpec};
pub use pde::{PdeSolver, SolverSettings, StateSolveReport};
pub use scalar::Real;

pub type GridF64 = Grid<f64>;
pub type GridFunctionF64 = GridFunction<f64>;
pub type BoundsF64 = Bounds<f64>;
pub type PerturbationF64 = Perturbation<f64>;
pub type ProblemSpecF64 = ProblemSpec<f64>;
pub type PdeSolverF64 = PdeSolver<f64>;
pub type SolveOptionsF64 = optimizer::SolveOptions<f64>;
pub type EvaluatedControlF64 = objective::EvaluatedControl<f64>;
