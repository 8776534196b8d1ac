//! Preconditioned fixed-point iterations for non-negative solutions of
//! noisy linear inverse problems, with a kinetic-rate biosensor model.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the CLI and
//! parallel drivers live in the `nnreg` companion crate.

#![no_std]
// `!(x > 0.0)` style checks reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analysis;
pub mod biosensor;
pub mod error;
pub mod linalg;
pub mod operators;
pub mod rng;
pub mod solvers;
pub mod stopping;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use operators::{
    spectral_norm, CatalogId, DenseOperator, PowerIterationConfig, Preconditioner, PreconditionerSpec,
};
pub use solvers::{
    run_solver, run_solver_with_truth, InverseProblem, IterationState, Method, OutputMap,
    RelaxationSchedule, RunOutcome, SolverConfig, StopReason,
};
pub use stopping::{APrioriRule, DiscrepancyScale, StoppingCriterion, StoppingRule};
