//! Numerical core for chance-constrained optimization governed by an elliptic
//! PDE with a Gaussian random coefficient field.
//!
//! The crate is `no_std` (with `alloc`). It contains the P1 finite-element
//! discretization, the Gaussian field model, the Darcy model with its adjoint
//! and Hessian actions, the randomized low-rank Taylor surrogate of the
//! constraint, chance estimation, and the continuation penalty optimizer.
//! File formats, configuration and the command line live in the companion
//! `chanceopt-cli` crate.

#![no_std]
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod chance;
pub mod darcy;
pub mod dense;
pub mod engine;
pub mod error;
pub mod fem;
pub mod field;
pub mod lowrank;
pub mod mesh;
pub mod optimizer;
pub mod random_field;
pub mod solver;
pub mod sparse;
pub mod taylor;

pub use chance::{chance_saa, saa_bias, ChanceEstimate, ChanceMode, ChanceSource, SmoothingParams};
pub use darcy::{DarcyParams, DarcyProblem, SolveCounts, StateBundle};
pub use engine::{CostGradEngine, EngineKind, Evaluation, TaylorGradient};
pub use error::{Error, Result};
pub use field::{DualVector, NodalField};
pub use lowrank::{double_pass_eigensolver, weighted_qr, EigenPairs};
pub use mesh::{Point, Rect, StructuredTriMesh};
pub use optimizer::{
    continuation_solve, lbfgs_bound, Bounds, ContinuationSchedule, LbfgsOptions, OptTrace,
};
pub use random_field::{GaussianFieldModel, SampleSet};
pub use solver::{solve_spd, SolverOptions};
pub use sparse::SparseOperator;
pub use taylor::{build_surrogate, LowRankOptions, SurrogateBuild, TaylorSurrogate};
