//! Formula language: variables, pure formulas, symbolic heaps, text syntax
//! and a concrete evaluator for base formulas.

pub mod eval;
pub mod heap;
pub mod pure;
pub mod text;
pub mod var;

pub use eval::{enumerate_models, enumerate_models_limited, eval_base, eval_base_with, pointer_vars, Cell, ConcreteState, EvalError, Val};
pub use heap::{alpha_eq, Formula, HeapAtom, PredInst, SymbolicHeap};
pub use pure::{Pure, Seq, Term};
pub use text::{parse_heap, parse_pure, parse_term, var_of, TextError};
pub use var::{FreshGen, Var};
