//! Dense and sparse storage, block vectors, operators and their kernels.

pub mod block;
pub mod cg;
pub mod dense;
pub mod inner;
pub mod mm;
pub mod operator;
pub mod sparse;

pub use block::{block_apply, block_axpy, block_inner, block_product, BlockVectors};
pub use cg::{cg_solve, CgColumnReport, CgOutcome};
pub use dense::{DenseMatrix, Svd};
pub use inner::InnerProduct;
pub use mm::{read_matrix_market, write_matrix_market};
pub use operator::{
    CountingOperator, DiagonalOperator, FnOperator, IdentityOperator, LinearOperator, OperatorKind,
    SharedOperator, ShiftedOperator,
};
pub use sparse::{laplacian_3d, CsrMatrix};
