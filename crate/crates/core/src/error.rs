use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge {index} ({src} -> {dst}) references a node outside 0..{num_nodes}")]
    EdgeOutOfRange {
        index: usize,
        src: u64,
        dst: u64,
        num_nodes: usize,
    },

    #[error("node {node} is outside 0..{num_nodes}")]
    NodeOutOfRange { node: u64, num_nodes: usize },

    #[error("offset {offset} is out of range for node {node} with degree {degree}")]
    OffsetOutOfRange { node: u32, offset: usize, degree: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid hardware configuration: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("no feature vector for node {node}")]
    MissingFeature { node: u32 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
