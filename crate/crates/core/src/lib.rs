//! Numerics for the ground-state energy expansion of a dilute Bose gas in
//! the Gross–Pitaevskii regime on the unit torus.
//!
//! Units throughout: hbar = 2m = 1, lengths in torus units, momenta in
//! 2πZ³.

pub mod bogoliubov;
pub mod cli;
pub mod config;
pub mod energy;
pub mod error;
pub mod lattice;
pub mod potentials;
pub mod quadrature;
pub mod scattering;

pub use error::{Error, Result};
