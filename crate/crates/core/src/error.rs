use thiserror::Error;

/// Errors surfaced by the codec library.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("frame overrun: {used_bits} bits used, budget is {budget_bits} bits")]
    FrameOverrun { used_bits: u32, budget_bits: u32 },

    #[error("decoder ran past the end of the packet")]
    DecodeUnderrun,

    #[error("invalid table data: {0}")]
    InvalidTables(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, CodecError>;
