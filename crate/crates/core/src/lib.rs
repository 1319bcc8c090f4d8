//! Spectral Galerkin simulator for the incompressible Navier-Stokes-Voigt
//! equations with variable, possibly vanishing, density.

pub mod error;
pub mod spectral;

pub use error::{Error, Result};
pub mod density;
pub mod initial;
pub mod transport;
pub mod estimates;
pub mod forcing;
pub mod galerkin;
pub mod pressure;
pub mod stability;
pub mod config;
pub mod output;
pub mod harness;
