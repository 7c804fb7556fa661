//! Multiscale Petrov-Galerkin finite elements with localized fine-scale correctors.

pub mod analysis;
pub mod assembly;
pub mod config;
pub mod correctors;
pub mod discretization;
pub mod error;
pub mod experiments;
pub mod interpolation;
pub mod mesh;
pub mod multiscale;
pub mod problems;
pub mod scalar;
pub mod solve;
pub mod sparse;

pub use error::{Error, Result};
