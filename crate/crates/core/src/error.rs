use thiserror::Error;

use crate::expr::Value;

/// Errors raised while building or executing pipelines.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("{kind} slot {index} out of range (have {len})")]
    IndexOutOfRange {
        kind: SlotKind,
        index: usize,
        len: usize,
    },
    #[error("division by zero in `mod`")]
    DivisionByZero,
    #[error("type mismatch: expected {expected}")]
    TypeMismatch { expected: &'static str },
    #[error("invalid lambda: {0}")]
    InvalidLambda(String),
    #[error("invalid pipeline: {0}")]
    InvalidPipeline(String),
    #[error("unresolved dataset `{0}`")]
    UnresolvedDataset(String),
    #[error("get() called without a preceding successful advance()")]
    GetBeforeAdvance,
    #[error("arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("call site {0} is not registered with the cache")]
    UnregisteredSite(u64),
    #[error("cannot build worker pool: {0}")]
    ThreadPool(String),
    #[error("result mismatch: expected {expected:#018x}, got {actual:#018x}")]
    ResultMismatch { expected: Value, actual: Value },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Param,
    Capture,
    Var,
}

impl std::fmt::Display for SlotKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SlotKind::Param => "param",
            SlotKind::Capture => "capture",
            SlotKind::Var => "loop variable",
        })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
