//! Configuration-driven experiment runner for the optofock simulator:
//! calibration tables, damping sweeps, trajectories, phase-space data and
//! truncation audits, all written as CSV with a provenance header.

pub mod commands;
pub mod config;
pub mod output;
pub mod pipeline;

pub use config::ExperimentConfig;
