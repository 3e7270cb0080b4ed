//! Finite-volume laboratory for multi-particle random lattice Hamiltonians.
//!
//! Fermionic configuration spaces, random fields, Hamiltonian assembly,
//! exact diagonalization, the predicates of the scaling analysis and Monte
//! Carlo experiments around them.

pub mod cli;
pub mod config;
pub mod config_space;
pub mod disorder;
pub mod error;
pub mod experiments;
pub mod msa;
pub mod operators;
pub mod output;
pub mod spectral;

pub use error::{Error, Result};
