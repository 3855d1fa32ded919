//! Single-excitation dynamics of XX spin lattices shaped as billiards.
//!
//! A rectangular billiard is integrable and a quarter-stadium is chaotic.
//! The crate builds both on the square lattice and propagates a corner
//! excitation exactly or with stroboscopic gate noise. It also computes the
//! diagnostics that tell the two apart: level-spacing statistics,
//! coarse-grained fidelity and its autocorrelation, momentum distributions,
//! and disorder-ensemble averages.

pub mod cli;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod hamiltonian;
pub mod observables;
pub mod spectral_stats;

pub use error::{BilliardError, Result};
