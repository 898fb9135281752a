//! Quotient-categorical distributional bias estimation for average-reward
//! Markov reward processes.
//!
//! The crate is organised bottom-up:
//!
//! - [`mrp`]: the finite model, its stationary law, gain and bias, and seeded samplers.
//! - [`categorical`]: the fixed grid, coefficient vectors, projection and Cramér metrics.
//! - [`operators`]: the exact and projected distributional operators and their one-sample backups.
//! - [`schedules`]: step sizes, two-phase thresholds and the explicit constant stack.
//! - [`recursions`]: the KM and stochastic KM drivers that produce residual traces.

mod error;

pub mod categorical;
pub mod instances;
pub mod mrp;
pub mod operators;
pub mod recursions;
pub mod schedules;

pub use error::{Error, Result};
