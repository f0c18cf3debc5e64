//! Self-similar lifting profiles of the thin-film equation `h_t + (h^m h_xxx)_x = 0`.
//!
//! The profile `f` solves `α(f − y f_y) + (f^m f_yyy)_y = 0` with `f(0) = 1`,
//! `f_y(0) = f_yyy(0) = 0`, `f_yy(0) = κ` and `f(y)/y → a > 0`. The crate finds
//! `κ` by bisection on the invariant-region verdict, and provides the energy,
//! asymptotic, spectral and merging diagnostics built on the accepted profile.

// `!(x > 0.0)` is how NaN is rejected throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(feature = "cli")]
pub mod cli;
pub mod error;
pub mod farfield;
pub mod fit;
pub mod integrator;
pub mod merging;
pub mod model;
pub mod ode;
pub mod quadrature;
pub mod shooting;
pub mod spectral;

pub use error::{Error, Result};
pub use integrator::{integrate, integrate_with, seed, IntegrateOptions, TerminalEvent, Trajectory, Verdict};
pub use model::{ProblemConfig, ProfileState, PhaseState, Region, RegionTag};
