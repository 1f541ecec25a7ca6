//! Alternating maximization proximal descent (AMPDA) for structured nonsmooth
//! fractional programs
//!
//! ```text
//! minimize  f(x)/g(x) + h1(x) - h2(x)   subject to  g(x) != 0,  x in C,
//! ```
//!
//! solved through the min-max reformulation
//! `min_x max_c  2c f(x) - c^2 f(x) g(x) + h1(x) - h2(x)`.
//!
//! * [`problem`]: the oracle trait and the extended objective.
//! * [`oracles`]: the L1/L2 and L1/top-K robust recovery models.
//! * [`solver`]: the algorithm itself.
//! * [`diagnostics`]: criticality measure, trace audits, gradient checks.
//! * [`data`]: synthetic instances, initial point, LIBSVM input, result files.
//! * [`experiment`]: seeded single runs and batch summaries.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod oracles;
pub mod problem;
pub mod solver;

pub use error::{Error, Result};
pub use oracles::{build_problem, Model, RecoveryInstance, RecoveryProblem};
pub use problem::{
    eval_minmax_objective, eval_objective, optimal_scalar, ExtendedReal, FractionalProblem,
    ObjectiveValue,
};
pub use solver::{solve, IterateState, SolveResult, SolveStatus, SolverConfig};
