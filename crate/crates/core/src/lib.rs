//! Pseudo-spectral simulator for a viscous free-surface layer perturbed
//! around a gravity-driven shear flow, in flattened coordinates.
pub mod diagnostics;
pub mod elliptic;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod forcing;
pub mod geometry;
pub mod spectral;
pub mod stepper;
pub mod temporal;

pub use error::{Error, Result};
