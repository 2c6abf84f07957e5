//! Tilted paths of measures and transport velocities learned by kernel
//! collocation.

pub mod collocation;
pub mod config;
pub mod controlsolver;
pub mod densities;
pub mod error;
pub mod experiment;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod refsolver;
pub mod transport;

pub use error::{Error, Result};
