//! Heap-program verifier: encodes a small C-like language into constrained
//! Horn clauses over separation logic and decides them with a cyclic
//! unfolding procedure.

pub mod cyclic;
pub mod encoder;
pub mod frontend;
pub mod invgen;
pub mod sl;
pub mod solver;
pub mod witness;
