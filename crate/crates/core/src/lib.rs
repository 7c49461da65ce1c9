//! Finite-element view of ReLU and Hat networks: mass-matrix spectra,
//! gradient-descent mode decay, and small training experiments that compare
//! how fast each activation fits low and high frequencies.

pub mod eigen;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod harness;
pub mod freq;
pub mod gd;
pub mod kernel;
pub mod image;
pub mod matrix;
pub mod nn;
pub mod plot;
pub mod quadrature;
pub mod stats;
pub mod targets;

pub use error::{Error, Result};
