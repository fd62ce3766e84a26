//! Structure-preserving subspace eigensolver for the linear response
//! eigenvalue problem `K x = λ y`, `M y = λ x` with `K` symmetric positive
//! semi-definite and `M` symmetric positive definite.

pub mod biorth;
pub mod bosp;
pub mod error;
pub mod linalg;
pub mod nullspace;
pub mod problems;
pub mod projected;

pub use error::{Error, Result};
