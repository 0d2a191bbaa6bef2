//! Dense-matrix reverse-mode differentiation.
//!
//! The engine is deliberately small: row-major `f64` matrices, a tape of
//! primitive ops, a parameter store, Adam, and a central-difference checker.
//! Graph structure enters only through [`Segments`] (neighbor lists) and
//! row-index gathers, never through sparse matrix types.

mod gradcheck;
mod matrix;
mod params;
mod segments;
mod tape;

pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use matrix::{matmul, Matrix};
pub use params::{Adam, ParamId, ParamStore, Parameter};
pub use segments::Segments;
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward called on a non-scalar of shape {shape:?}")]
    NotScalar { shape: (usize, usize) },
    #[error("{op} applied to an empty input")]
    Empty { op: &'static str },
    #[error("loss is not deterministic: {first} then {second}")]
    NonDeterministicLoss { first: f64, second: f64 },
}
