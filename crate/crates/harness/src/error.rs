use celtld::CodecError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Format(String),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("{0}")]
    Input(String),
}

impl HarnessError {
    /// Process exit status: 2 for bad input files, 3 for internal failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Codec(CodecError::InvalidTables(_) | CodecError::InvalidConfig(_)) => 2,
            HarnessError::Codec(_) => 3,
            _ => 2,
        }
    }
}

pub fn format_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Format(msg.into())
}

pub type Result<T> = std::result::Result<T, HarnessError>;
