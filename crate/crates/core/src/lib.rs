//! Simulation of frequency-modulated Rydberg atom pairs and chains:
//! Hamiltonian assembly, Lindblad evolution, Floquet analysis, thermal
//! disorder sampling, observables, fitting and calibration models.

pub mod bessel;
pub mod calibration;
pub mod disorder;
pub mod error;
pub mod fitting;
pub mod floquet;
pub mod hamiltonian;
pub mod linalg;
pub mod lindblad;
pub mod observables;
pub mod ode;
pub mod schedule;
pub mod system;

pub use error::{Error, Result};
