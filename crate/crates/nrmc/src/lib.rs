//! MCMC kernels built around a retained acceptance variable.
//!
//! The accept/reject step of Metropolis-style samplers is driven by a
//! persistent variable `v` on `[-1, +1]` instead of a fresh uniform draw.
//! Between updates `v` takes a small deterministic step around that
//! interval, and acceptance rescales it without changing the point it
//! implies on the density axis. The result is a valid chain whose
//! accept/reject outcomes are anticorrelated over time, which lowers the
//! autocorrelation time of observables without touching the proposal
//! mechanism. The standard fresh-uniform rule is available everywhere as
//! the baseline.
//!
//! Modules:
//! * [`chain`]: chain state, the retained-variable policy, RNG handling.
//! * [`targets`]: benchmark distributions (Gaussians and a two-continuous,
//!   twenty-binary posterior-like model).
//! * [`samplers`]: random-walk Metropolis, HMC, persistent-momentum
//!   Langevin, binary Gibbs, and group schedules.
//! * [`diagnostics`]: autocorrelation time and scalar extraction.
//! * [`harness`]: presets, parameter scaling, sweeps, CSV output.

pub mod chain;
pub mod diagnostics;
mod error;
pub mod harness;
pub mod samplers;
pub mod targets;

pub use error::{Error, Result};
