//! Numerical simulation of McKean-Vlasov SDEs through interacting particle
//! systems.
//!
//! The crate covers the coefficient model and state truncation
//! ([`model`]), counter-based noise ([`rng`]), random batch partitions and
//! their deviation statistics ([`batching`]), the time-stepping engines
//! ([`solver`]) and the measurement layer ([`analysis`]).

pub mod analysis;
pub mod batching;
mod error;
pub mod model;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
