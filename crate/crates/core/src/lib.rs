//! Workload reduction for Brownian network control problems.
//!
//! The crate takes a Brownian network (state `Z = X + RY` confined to a
//! polytope, controls with `KY` nondecreasing, holding cost `h` and control
//! value rates `v`) and
//!
//! * checks full displacement and no arbitrage by linear programming
//!   ([`assumptions`]),
//! * computes the workload matrix `M`, effort matrix `G` and dual prices
//!   `(π, κ)` ([`reduction`]),
//! * builds the effective holding cost `ǧ` and its minimizing selection `ψ`
//!   ([`effective_cost`]),
//! * simulates both control problems on a common grid and compares their
//!   discounted costs ([`pathsim`], [`policy`]).
//!
//! See the `examples/` directory for one runnable program per capability.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod assumptions;
pub mod cli;
pub mod effective_cost;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod pathsim;
pub mod policy;
pub mod reduction;

pub use error::{Error, Result};
pub use model::{NetworkData, Polytope, QuadraticCost, TwoServerParams};
