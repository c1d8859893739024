use thiserror::Error;

pub type Result<T, E = MmfError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MmfError {
    #[error("model has no taxa")]
    EmptyModel,

    #[error("non-finite log-probability: {0}")]
    NonFinite(String),

    #[error("state outside model support: {0}")]
    OutsideSupport(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("newick parse error at byte {pos}: {msg}")]
    Newick { pos: usize, msg: String },

    #[error("duplicate leaf name `{0}`")]
    DuplicateLeaf(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
