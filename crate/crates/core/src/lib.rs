//! Spin-1/2 XXZ chains with engineered level-spacing defects.
//!
//! The crate builds the Hamiltonian of a chain restricted to a fixed number of
//! excitations, propagates states exactly or under time-dependent detuning,
//! evaluates entanglement diagnostics and compares closed-form effective
//! models with exact diagonalization. [`protocols`] strings these together
//! into the Bell, W and bound-pair creation-and-maintenance experiments.

pub mod basis;
pub mod entanglement;
pub mod error;
pub mod evolve;
pub mod hamiltonian;
pub mod perturbation;
pub mod protocols;

pub use error::{Error, Result};
