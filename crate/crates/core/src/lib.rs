//! Simulation and protocol library for a cluster fronted by several
//! cooperating schedulers.

pub mod admission;
pub mod coordination;
pub mod domain;
pub mod error;
pub mod metrics;
pub mod placement;
pub mod simkernel;
pub mod sweep;

pub use error::{Error, Result};
