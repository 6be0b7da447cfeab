//! Kinetic Fokker–Planck propagators on a truncated phase space.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod kernels;
pub mod phase_space;
pub mod potential;
pub mod propagator;
pub mod spectral;

pub use error::{Error, Result};
