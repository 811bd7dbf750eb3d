use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by tensor operations, transformations, and objectives.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("non-finite value in {op} input at flat index {index}")]
    NonFinite { op: &'static str, index: usize },
    #[error("label {label} at row {row} is outside [0, {classes})")]
    Label {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("{what} index {index} is outside [0, {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("malformed checkpoint: {0}")]
    Format(String),
}

pub type Result<T> = core::result::Result<T, Error>;
