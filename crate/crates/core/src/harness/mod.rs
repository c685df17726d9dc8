//! Experiment orchestration: instance generation, sweeps, scaling studies,
//! keyed randomness, and the property-verification suite.

pub mod instance;
pub mod rng;
pub mod scaling;
pub mod sweep;
pub mod verify;
