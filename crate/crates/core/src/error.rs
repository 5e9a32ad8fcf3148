use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure to decode a value from a [`Payload`](crate::Payload).
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("payload truncated: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("{0} trailing bytes after decoded value")]
    Trailing(usize),
    #[error("invalid tag byte {0}")]
    InvalidTag(u8),
    #[error("invalid utf-8 in string")]
    Utf8,
    #[error("length {0} does not fit in memory")]
    Length(u64),
}

#[derive(Debug, Error)]
pub enum CommError {
    #[error("rank {rank} cannot address rank {peer} in a group of {size}")]
    InvalidRank { rank: usize, peer: usize, size: usize },
    #[error("rank {rank}: peer {peer} exited while a message was awaited")]
    PeerExited { rank: usize, peer: usize },
    #[error("group aborted after rank {failed} failed")]
    Aborted { failed: usize },
    #[error("deadlock detected: {0}")]
    Deadlock(String),
    #[error("rank {rank}: timed out after {secs:.1}s waiting for rank {peer}")]
    Timeout { rank: usize, peer: usize, secs: f64 },
    #[error("bootstrap: {0}")]
    Bootstrap(String),
    #[error("frame of {0} bytes exceeds the 32-bit length prefix")]
    FrameTooLarge(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("rank {rank} failed: {source}")]
    RankFailed {
        rank: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("panic: {0}")]
    Panic(String),
    #[error("task {index} failed: {message}")]
    Task { index: usize, message: String },
    #[error("population became extinct at step {step}")]
    Extinction { step: usize },
    #[error("timing for rank {rank} is {value}, must be positive and finite")]
    InvalidTiming { rank: usize, value: f64 },
    #[error("work redistribution did not settle within {limit} transfers")]
    RedistributionOverrun { limit: usize },
    #[error("iterate became non-finite at Schwarz iteration {iteration}")]
    Divergence { iteration: usize },
    #[error("{0}")]
    App(String),
}

impl Error {
    /// The error that originally caused a group failure, unwrapping
    /// [`Error::RankFailed`].
    pub fn root(&self) -> &Error {
        match self {
            Error::RankFailed { source, .. } => source.root(),
            other => other,
        }
    }

    /// True when a rank raised this only because some other rank failed
    /// first.
    pub fn is_consequential(&self) -> bool {
        matches!(
            self.root(),
            Error::Comm(CommError::Aborted { .. }) | Error::Comm(CommError::PeerExited { .. })
        )
    }
}
