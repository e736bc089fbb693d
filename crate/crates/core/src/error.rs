use thiserror::Error;

pub type Result<T, E = PdsrError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PdsrError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("candidate pool is empty")]
    EmptyCandidates,

    #[error("search space too large: {subsets} subsets exceeds cap {cap}")]
    TooLarge { subsets: u128, cap: u128 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("privacy audit failed: {0}")]
    Privacy(String),

    #[error("unknown user {0}")]
    UnknownUser(u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl PdsrError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PdsrError::InvalidArgument(msg.into())
    }

    pub(crate) fn decode(msg: impl Into<String>) -> Self {
        PdsrError::Decode(msg.into())
    }

    /// Copy of this error with the same variant; wrapped I/O and CSV errors keep only their message.
    pub fn duplicate(&self) -> Self {
        match self {
            PdsrError::InvalidArgument(m) => PdsrError::InvalidArgument(m.clone()),
            PdsrError::Decode(m) => PdsrError::Decode(m.clone()),
            PdsrError::EmptyCandidates => PdsrError::EmptyCandidates,
            PdsrError::TooLarge { subsets, cap } => PdsrError::TooLarge {
                subsets: *subsets,
                cap: *cap,
            },
            PdsrError::Parse { line, message } => PdsrError::Parse {
                line: *line,
                message: message.clone(),
            },
            PdsrError::Config(m) => PdsrError::Config(m.clone()),
            PdsrError::Privacy(m) => PdsrError::Privacy(m.clone()),
            PdsrError::UnknownUser(u) => PdsrError::UnknownUser(*u),
            PdsrError::Io(e) => PdsrError::Io(std::io::Error::new(e.kind(), e.to_string())),
            PdsrError::Csv(e) => PdsrError::Io(std::io::Error::other(e.to_string())),
        }
    }
}
