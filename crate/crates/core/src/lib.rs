//! Simulation of random warping functions, exact moment oracles for the
//! simulated paths, and a distribution-drift analysis built on them.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod manifest;
pub mod moments;
pub mod montecarlo;
pub mod rng;
pub mod samplers;
pub mod validate;
pub mod warp;

pub use error::{Error, Result};
