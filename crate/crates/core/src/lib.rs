pub mod alloc;
pub mod bands;
pub mod codec;
pub mod energy;
pub mod error;
pub mod pitch;
pub mod pvq;
pub mod rangecoder;
pub mod tables;
pub mod transform;

pub use error::{CodecError, Result};
