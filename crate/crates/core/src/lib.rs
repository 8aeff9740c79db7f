//! Simulation and analysis toolkit for a linear-optical Fock-state filter.
//!
//! * [`fock`]: exact few-photon propagation through beamsplitters and waveplates.
//! * [`filter`]: closed-form heralding amplitudes and filter figures of merit.
//! * [`interference`]: delay-scan dip models, fits and background correction.
//! * [`experiment`]: the full heralded circuit, down to analyzer probabilities
//!   and simulated tomography counts.
//! * [`tomography`]: linear and maximum-likelihood two-qubit reconstruction.
//! * [`metrics`]: fidelity, tangle and linear entropy.

// negated comparisons below are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod filter;
pub mod fock;
pub mod interference;
pub mod metrics;
pub mod optim;
pub mod qubits;
pub mod tomography;

pub use error::{Error, Result};
