//! Nehari-manifold solver for the concave-convex fractional p-Laplacian problem
//!
//! ```text
//! -L_K u = λ h |u|^{q-1} u + b |u|^{r-1} u   in Ω,      u = 0 on ℝⁿ∖Ω,
//! ```
//!
//! with `0 < q < p-1 < r < p*-1`. Two non-negative solutions are located by
//! minimising the energy on the two branches of the Nehari set.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discretization;
pub mod error;
pub mod expr;
pub mod fibering;
pub mod functional;
pub mod kernel;
mod quad;
pub mod solver;

pub use discretization::{lp_norm, Domain, EnergyWeights, Field, GramFactor, Mesh, NearField};
pub use error::{Error, Result};
pub use expr::Expr;
pub use fibering::lambda0::{estimate_lambda0, Lambda0Estimate, SobolevSearch};
pub use fibering::{critical_points, project, Branch, FiberingReport, FiberingRoot, RootKind};
pub use functional::{
    classify, energy, gradient, reduced_integrals, Exponents, ProblemSpec, ReducedIntegrals, Sign, SignClass,
};
pub use kernel::{CustomKernel, KernelCheckReport, KernelFamily, KernelSampling, KernelSpec};
pub use solver::{Solver, SolverConfig, SolverResult, SolverStatus, StepRule};
