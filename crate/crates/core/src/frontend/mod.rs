//! Source language: parsing, normalization and a reference interpreter.

pub mod ast;
mod check;
pub mod interp;
pub mod lower;
pub mod parse;

pub use ast::{BinOp, DataDecl, Expr, Proc, Program, Stmt, StmtKind, Type, UnOp};
pub use interp::{interpret_bounded, MemErrKind, Outcome, DEFAULT_STEP_BOUND};
pub use lower::{is_normalized, ssa_violation, to_core};
pub use parse::parse_program;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrontendError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: u32, col: u32, msg: String },
    #[error("line {line}: unsupported feature: {msg}")]
    Unsupported { line: u32, msg: String },
    #[error("line {line}: {msg}")]
    Type { line: u32, msg: String },
    #[error("program has no main procedure")]
    MissingMain,
    #[error("main takes {expected} inputs, got {got}")]
    Arity { expected: usize, got: usize },
}

/// Parse and normalize in one step.
pub fn load(src: &str) -> Result<Program, FrontendError> {
    to_core(&parse_program(src)?)
}
