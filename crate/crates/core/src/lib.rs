//! Solvers for second-order mean field games.
//!
//! Two families of solvers share one problem catalog:
//!
//! * [`fd`]: finite-difference policy iteration on periodic grids, plus a
//!   damped fixed-point iteration used as a reference solution.
//! * [`dpi`]: deep policy iteration: three small residual networks for the
//!   density, the value function and the policy, each trained on the residual
//!   of its own equation.
//!
//! [`nn`] holds the network machinery (input jets, parameter gradients, Adam),
//! [`metrics`] the error norms and smoothing used to report results.

pub mod dpi;
pub mod error;
pub mod fd;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod problem;

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{MfgError, Result};
pub use grid::{Boundary, GridField, Solution, SpaceTimeGrid};
pub use problem::{HamiltonianKind, MfgProblem};
