//! Transmit covariance design with improper and proper Gaussian signaling for
//! the K-user MIMO interference channel under hardware impairments.

pub mod cli;
pub mod error;
pub mod hwi;
pub mod montecarlo;
pub mod network;
pub mod problems;
pub mod realdec;
pub mod scenario_file;
pub mod solver;
pub mod surrogate;
pub mod verify;

pub use error::{Error, Result};
