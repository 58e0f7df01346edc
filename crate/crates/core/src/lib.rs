//! Trotterized time evolution of finite-dimensional quantum systems,
//! Monte Carlo estimation of observable expectations, and the
//! bias/variance budget allocation between step count and replicates.
//!
//! Module map:
//!
//! * [`state`]: pure states, ensembles, inner products and distances.
//! * [`operators`]: local Hamiltonian terms, exponentials, exact
//!   propagators, observables and the operator distance Γ.
//! * [`trotter`]: the symmetric second-order step, evolution and error
//!   scaling studies.
//! * [`measurement`]: outcome distributions, moments, sampling, collapse.
//! * [`estimator`]: the Monte Carlo estimator, MSE accounting, calibration
//!   and the step/replicate allocator.
//! * [`oscillator`]: the six-dimensional harmonic oscillator workload.
//! * [`systems`]: builtin fixtures and JSON system descriptions.

pub mod error;
pub mod estimator;
pub mod measurement;
pub mod operators;
pub mod oscillator;
mod parallel;
pub mod state;
pub mod systems;
pub mod trotter;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Dense complex matrix used for local blocks and small-system oracles.
pub type CMatrix = nalgebra::DMatrix<C64>;
