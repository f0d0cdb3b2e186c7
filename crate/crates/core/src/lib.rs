//! Digital-twin runtime for cyber-physical systems.
//!
//! The twin exposes three layers over one plant: synchronized signal data
//! ([`data_model`]), extrapolation with failure modes ([`prediction`]) and
//! symbolic knowledge ([`causality`]). [`diagnosis`] and [`planning`] are
//! AI applications on top; [`simulator`] provides the water-tank plant the
//! rest is exercised on, and [`harness`] drives it all from the command line.

pub mod causality;
pub mod data_model;
pub mod diagnosis;
pub mod harness;
pub mod planning;
pub mod prediction;
pub mod simulator;
mod twin;

pub use twin::{ConsistencyReport, StateCheck, Twin, TwinError};
