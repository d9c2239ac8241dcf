//! Posterior inference for Gaussian graphical models under the G-Wishart
//! prior: exact MCMC samplers over graph space (WWA, DCBF, CL), the
//! G-Wishart sampling engine with graph decomposition, data generators and
//! chain diagnostics.

pub mod decompose;
pub mod gwishart;
pub mod kernels;
pub mod chain;
pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod linalg;

pub use error::{Error, Result};
