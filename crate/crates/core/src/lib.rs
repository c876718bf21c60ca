//! Quantum and classical phase-space analysis of the three-particle
//! Fermi-Pasta-Ulam-Tsingou model.

pub mod basis;
pub mod classical;
pub mod error;
pub mod husimi;
pub mod model;
pub mod quad;
pub mod spectral;
pub mod stats;
pub mod wigner;

pub use error::{Error, Result};
