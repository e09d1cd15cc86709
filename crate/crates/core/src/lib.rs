//! Collective states of transmons coupled to a rectangular waveguide: model
//! assembly, non-hermitian spectra, master-equation dynamics and virtual experiments.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod fockspace;
pub mod integrator;
pub mod linalg;
pub mod model;
pub mod operator;
pub mod oracle;
pub mod spectra;
pub mod waveguide;

pub use error::{Error, Result};
