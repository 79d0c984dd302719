//! Policy space identification from demonstrations.

pub mod configuration;
pub mod environments;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod identification;
pub mod learning;
pub mod policies;
pub mod stats;

pub use error::{Error, Result};
