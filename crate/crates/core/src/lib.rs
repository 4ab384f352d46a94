//! Privacy accounting, convergence bounds and simulation for over-the-air
//! federated learning with random user sampling.

pub mod channel;
pub mod conv_bounds;
pub mod dp_analysis;
pub mod error;
pub mod expcli;
pub mod fedsgd_sim;
pub mod rng;
pub mod sampling;

pub use error::{AirdpError, Result};

/// Crate version embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
