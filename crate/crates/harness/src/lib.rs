//! Tooling around the codec: files, channel simulation, metrics, training.

pub mod channel;
pub mod container;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod secded;
pub mod train;
pub mod wav;

pub use error::{HarnessError, Result};
