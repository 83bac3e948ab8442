//! Isomap batch embedding with Gaussian-process stream mapping and
//! variance-based drift detection.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod data;
pub mod gp;
pub mod manifold;
pub mod spectral;
pub mod streaming;

pub use error::{Error, Result};
