use thiserror::Error;

/// Errors produced by estimation, sampling and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("empty category {category} in column {column}")]
    EmptyCategory { column: usize, category: usize },

    #[error("no consecutive sequences of required length")]
    NoUsableRows,

    #[error("degenerate response")]
    DegenerateResponse,

    #[error("zero lambda_max")]
    ZeroLambdaMax,

    #[error("solver error: {0}")]
    Solver(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("node {node}: {source}")]
    Node { node: usize, source: Box<Error> },

    #[error("non-normalizable specification suspected")]
    SamplerDivergence,

    #[error("prediction error: {0}")]
    Prediction(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("schema version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: String, expected: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Attach the node index of the failing nodewise regression.
    pub fn at_node(self, node: usize) -> Error {
        Error::Node {
            node,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
