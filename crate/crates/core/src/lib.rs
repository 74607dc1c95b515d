//! Sensor placement by maximizing a CCA-projected lower bound of the mutual
//! information between sensor observations and the quantities of interest,
//! with ensemble-Kalman-filter verification on a Gaussian-puff release.

// `!(a > b)` style checks are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bo;
pub mod cca;
pub mod config;
pub mod dispersion;
pub mod enkf;
pub mod error;
pub mod gp;
pub mod harness;
pub mod mi;
pub mod par;
pub mod placement;
pub mod rng;
pub mod sample;
pub mod scenario;

pub use error::{Error, Result};
pub use sample::SampleMatrix;
