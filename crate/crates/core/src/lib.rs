//! Simulation of dissipative phonon Fock-state preparation in a laser-driven
//! optomechanical cavity with strong single-photon coupling.
//!
//! The pipeline: [`calibration`] picks the coupling that turns `|M⟩` into a
//! dark state, [`model`] builds the Hamiltonians, [`dynamics`] evolves the
//! full and effective master equations, and [`metrics`] grades the result.

pub mod calibration;
pub mod dynamics;
pub mod fock;
pub mod metrics;
pub mod model;
pub mod sparse;

pub use num_complex::Complex64;

/// Library version, recorded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
