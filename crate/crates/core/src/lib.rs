//! Spontaneous emission of a quantum emitter in a one-sided waveguide whose
//! far end is a phase-tunable mirror.
//!
//! The crate covers the forward model (guided mode, mirror reflectivity,
//! phase-dependent decay rate and intensity), a synthetic experiment generator
//! and the inverse pipeline that turns measured visibilities into bounds on
//! mirror reflectivity, beta factor and lateral offset.

pub mod commands;
pub mod config;
pub mod emission;
pub mod error;
pub mod inference;
pub mod modesolver;
pub mod opticalstack;
pub mod output;
pub mod synthlab;

pub use error::{Error, Result};
