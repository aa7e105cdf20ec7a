//! Twin Gaussian Process structured regression with Sharma-Mittal costs.

pub mod datasets;
pub mod divergence;
pub mod error;
pub mod evaluation;
pub mod kernels;
pub mod optimizer;
pub mod tgp;

pub use error::{Error, Result};
