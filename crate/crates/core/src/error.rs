use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("hierarchy syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("empty hierarchy text")]
    EmptyHierarchy,

    #[error("duplicate class label {0:?}")]
    DuplicateLabel(String),

    #[error("internal node at byte {pos} has {count} child(ren); at least 2 are required")]
    TooFewChildren { pos: usize, count: usize },

    #[error("unknown class label {0:?}")]
    UnknownLabel(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("csv error at row {row}, column {column}: {msg}")]
    Csv { row: usize, column: usize, msg: String },

    #[error("column {column} has zero variance")]
    ZeroVariance { column: usize },

    #[error("pool of {pool} cases cannot supply {k} disjoint sets of {size} and a nonempty test set")]
    InsufficientPool { pool: usize, k: usize, size: usize },

    #[error("posterior chain has no draws")]
    EmptyChain,

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("paired differences have zero variance")]
    DegenerateVariance,

    #[error("slice sampler interval collapsed around {0}")]
    SliceCollapse(f64),

    #[error("comparison grid incomplete: {0}")]
    IncompleteGrid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
