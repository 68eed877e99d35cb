use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: input {value} outside the domain")]
    Domain { op: &'static str, value: f64 },
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("backward root does not depend on any tensor that requires grad")]
    Detached,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("unknown op `{0}`")]
    UnknownOp(String),
    #[error("degenerate system: {0}")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
