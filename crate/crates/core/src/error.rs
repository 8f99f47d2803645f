use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("keyword set is empty")]
    EmptyKeywordSet,
    #[error("keyword {0:?} contains the reserved terminator '$'")]
    ReservedChar(String),
    #[error("invalid tree configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown keyword {0:?}")]
    UnknownKeyword(String),
    #[error("unknown code {0}")]
    UnknownCode(String),
    #[error("code {0} is at the root level and has no parent")]
    RootCode(String),
    #[error("no embedding for keyword {0:?}")]
    MissingEmbedding(String),
    #[error("occupancy {0} is outside (0, 1]")]
    OmegaOutOfRange(f64),
    #[error("level {0} is out of range")]
    LevelOutOfRange(u32),
    #[error("malformed summarization tree: {0}")]
    MalformedTree(String),
    #[error("code {code} is too short for a {b}-bit master table")]
    CodeTooShort { code: String, b: u32 },
    #[error("routing-table arena is exhausted")]
    ArenaFull,
    #[error("malformed routing-table cell: {0}")]
    MalformedCell(String),
    #[error("entry cannot be summarized: {0}")]
    NotSummarizable(String),
    #[error("neighbor id {0} is out of range (0..31)")]
    NeighborId(u8),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("duplicate stream id {0:?}")]
    DuplicateStream(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}
