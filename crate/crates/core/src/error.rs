use thiserror::Error;

use crate::workflow::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid workflow:\n{0}")]
    InvalidWorkflow(ValidationReport),

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("graph contains a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("invalid computing system: {0}")]
    InvalidCluster(String),

    #[error("unknown cluster preset `{0}`")]
    UnknownPreset(String),

    #[error("unknown workflow family `{0}`")]
    UnknownFamily(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid traversal order: {0}")]
    InvalidOrder(String),

    #[error("block has no members")]
    EmptyBlock,

    #[error("instance too large for exhaustive search: {size} > {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("quotient graph is cyclic: {0:?}")]
    CyclicQuotient(Vec<usize>),

    #[error("vertex {0} is not the most recent merge product")]
    NotMergeProduct(usize),

    #[error("unknown quotient vertex {0}")]
    UnknownVertex(usize),

    #[error("invalid partition request: {0}")]
    InvalidPartitionRequest(String),

    #[error("external partitioner: {0}")]
    ExternalPartitioner(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
