use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: &'static str },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("index {index} out of range for extent {extent}")]
    Index { index: usize, extent: usize },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("hand-object graph invariant violated: {0}")]
    HaogInvariant(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite {component} loss at step {step}")]
    NonFiniteLoss { component: &'static str, step: u64 },
    #[error("empty evaluation split")]
    EmptySplit,
}
