//! Hierarchical Gaussian-process models for grids of learning curves, with
//! Monte-Carlo compute scaling laws and active curve acquisition.

pub mod active;
pub mod cli;
pub mod curves;
pub mod data;
pub mod error;
pub mod gp;
pub mod hier;
pub mod kernels;
mod lsq;
pub mod metrics;
mod optim;
pub mod scaling;

pub use error::{Error, ErrorClass, Result};
