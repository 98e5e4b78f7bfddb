use thiserror::Error;

pub type Result<T, E = NdError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NdError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: expected a rank-2 array, got shape {shape:?}")]
    Rank { op: &'static str, shape: Vec<usize> },

    #[error("shape {shape:?} holds {expected} values but {len} were given")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        len: usize,
    },

    #[error("{op}: expected a scalar, got shape {shape:?}")]
    NotScalar { op: &'static str, shape: Vec<usize> },

    #[error("{op}: index {index} out of range for length {len}")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },

    #[error("backward called on a graph built without gradient tracking")]
    NoGrad,

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),

    #[error("{0}")]
    Invalid(String),

    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),

    #[error("checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
}
