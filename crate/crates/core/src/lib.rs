//! Floquet spectra of the kicked field Ising chain and extreme-value statistics
//! of its half-chain entanglement spectra.
//!
//! * [`model`] builds and applies Floquet operators and COE samples.
//! * [`spectral`] extracts eigenpairs densely or with filtered Arnoldi.
//! * [`rmt`] samples Wishart references.
//! * [`entanglement`] computes Schmidt spectra.
//! * [`stats`] fits and compares distributions.
//! * [`dynamics`] evaluates matrix elements, autocorrelations and OTOCs.

pub mod error;
pub mod model;
pub mod rng;
pub mod spectral;
pub mod rmt;
pub mod entanglement;
pub mod stats;
pub mod dynamics;

pub use error::{Error, Result};
pub use faer::c64;
