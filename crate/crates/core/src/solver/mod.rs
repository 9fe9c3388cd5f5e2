//! Satisfiability of base formulas: normalization, reduction to arithmetic,
//! pointer projection and an integer decision procedure.

pub mod decide;
pub mod expure;
pub mod lia;
pub mod normalize;
pub mod smtlib;

use std::collections::BTreeSet;
use std::sync::RwLock;

use thiserror::Error;

pub use decide::{decide, decide_base, implies, is_sat, unsat_core, DecideError, Model, SatResult};
pub use expure::{expure, expure_parts, project, ExpureError};
pub use normalize::{normalize, normalize_with, NormError, Normalized};

use crate::sl::{pointer_vars, Pure, SymbolicHeap};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolverError {
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Expure(#[from] ExpureError),
    #[error(transparent)]
    Decide(#[from] DecideError),
}

/// Which integer decision procedure to use.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Internal,
    /// Executable speaking SMT-LIB2 on stdin/stdout.
    SmtLib(String),
}

static BACKEND: RwLock<Backend> = RwLock::new(Backend::Internal);

pub fn set_backend(b: Backend) {
    *BACKEND.write().unwrap() = b;
}

pub fn backend() -> Backend {
    BACKEND.read().unwrap().clone()
}

/// Arithmetic constraints for one normalized base heap, with existential
/// pointers projected away.
pub fn base_constraints(h: &SymbolicHeap) -> Result<Pure, SolverError> {
    let (ex, body) = expure_parts(h)?;
    let ptrs = pointer_vars(h);
    let w: BTreeSet<_> = ex.iter().filter(|v| ptrs.contains(v)).cloned().collect();
    Ok(Pure::and(project(&body, &w)))
}

/// Decide a base heap: a model of its free (and existential) variables if it
/// is satisfiable.
pub fn check_base(h: &SymbolicHeap) -> Result<Option<Model>, SolverError> {
    for n in normalize(h)? {
        let p = base_constraints(&n.heap)?;
        if let Some(m) = decide(&p)? {
            return Ok(Some(m));
        }
    }
    Ok(None)
}
