//! Numerical toolkit for curvature-dimension conditions on one-dimensional
//! weighted intervals, small metric measure spaces and finite Markov
//! generators.

pub mod cli;
pub mod coeffs;
pub mod convexity;
pub mod entropy_flow;
pub mod error;
pub mod gradient_flow;
pub mod grid;
pub mod markov_gamma;
pub mod metric_measure;
pub mod models;
pub mod transport;

pub use error::{Error, Result};
