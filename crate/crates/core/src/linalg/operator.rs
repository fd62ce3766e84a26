//! The apply-only operator contract every solver input goes through.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;

use super::block::BlockVectors;
use super::dense::{dot, DenseMatrix};
use super::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Dense,
    SparseCsr,
    MatrixFree,
}

/// A square linear map on `R^dim`, known only through its action on blocks.
///
/// `apply` writes `op · x` into `y` column by column; `y` has the same shape
/// as `x`. Implementations hold read-only state so concurrent calls on
/// distinct outputs are safe.
pub trait LinearOperator: Send + Sync {
    fn dim(&self) -> usize;

    fn apply(&self, x: &BlockVectors, y: &mut BlockVectors);

    fn kind(&self) -> OperatorKind {
        OperatorKind::MatrixFree
    }
}

pub type SharedOperator = Arc<dyn LinearOperator>;

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &BlockVectors, y: &mut BlockVectors) {
        let n = self.rows();
        let xs = x;
        y.par_columns_mut().enumerate().for_each(|(j, yc)| {
            yc.iter_mut().for_each(|v| *v = 0.0);
            let xc = xs.col(j);
            for (l, &s) in xc.iter().enumerate() {
                if s != 0.0 {
                    for (yi, a) in yc.iter_mut().zip(self.col(l)) {
                        *yi += a * s;
                    }
                }
            }
            debug_assert_eq!(yc.len(), n);
        });
    }

    fn kind(&self) -> OperatorKind {
        OperatorKind::Dense
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &BlockVectors, y: &mut BlockVectors) {
        y.par_columns_mut().enumerate().for_each(|(j, yc)| self.spmv(x.col(j), yc));
    }

    fn kind(&self) -> OperatorKind {
        OperatorKind::SparseCsr
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityOperator {
    dim: usize,
}

impl IdentityOperator {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl LinearOperator for IdentityOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &BlockVectors, y: &mut BlockVectors) {
        y.as_mut_slice().copy_from_slice(x.as_slice());
    }
}

/// `diag(d) · x`.
#[derive(Debug, Clone)]
pub struct DiagonalOperator {
    diag: Vec<f64>,
}

impl DiagonalOperator {
    pub fn new(diag: Vec<f64>) -> Self {
        Self { diag }
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }
}

impl LinearOperator for DiagonalOperator {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &BlockVectors, y: &mut BlockVectors) {
        y.par_columns_mut().enumerate().for_each(|(j, yc)| {
            for ((o, a), d) in yc.iter_mut().zip(x.col(j)).zip(&self.diag) {
                *o = a * d;
            }
        });
    }

    fn kind(&self) -> OperatorKind {
        OperatorKind::SparseCsr
    }
}

/// Matrix-free operator backed by a per-column callback `f(x, y)` computing
/// `y = A x`.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> LinearOperator for FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &BlockVectors, y: &mut BlockVectors) {
        y.par_columns_mut().enumerate().for_each(|(j, yc)| (self.f)(x.col(j), yc));
    }
}

impl<F> fmt::Debug for FnOperator<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnOperator").field("dim", &self.dim).finish()
    }
}

/// `op + shift·I`.
pub struct ShiftedOperator<'a> {
    inner: &'a dyn LinearOperator,
    shift: f64,
}

impl<'a> ShiftedOperator<'a> {
    pub fn new(inner: &'a dyn LinearOperator, shift: f64) -> Self {
        Self { inner, shift }
    }
}

impl LinearOperator for ShiftedOperator<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &BlockVectors, y: &mut BlockVectors) {
        self.inner.apply(x, y);
        for (o, a) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
            *o += self.shift * a;
        }
    }

    fn kind(&self) -> OperatorKind {
        self.inner.kind()
    }
}

/// Wraps an operator and counts how many vectors it has been applied to.
pub struct CountingOperator<'a> {
    inner: &'a dyn LinearOperator,
    applied: AtomicUsize,
}

impl<'a> CountingOperator<'a> {
    pub fn new(inner: &'a dyn LinearOperator) -> Self {
        Self { inner, applied: AtomicUsize::new(0) }
    }

    pub fn count(&self) -> usize {
        self.applied.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &'a dyn LinearOperator {
        self.inner
    }
}

impl LinearOperator for CountingOperator<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &BlockVectors, y: &mut BlockVectors) {
        self.applied.fetch_add(x.ncols(), Ordering::Relaxed);
        self.inner.apply(x, y);
    }

    fn kind(&self) -> OperatorKind {
        self.inner.kind()
    }
}

/// Dense copy of an operator, built by applying it to the identity. Test
/// scale only.
pub fn to_dense(op: &dyn LinearOperator) -> DenseMatrix {
    let n = op.dim();
    let e = BlockVectors::unit_columns(n, &(0..n).collect::<Vec<_>>());
    let mut y = BlockVectors::zeros(n, n);
    op.apply(&e, &mut y);
    y.to_dense()
}

/// Power-iteration estimate of `‖op‖₂` for a symmetric operator, returned
/// with a small safety factor.
pub fn estimate_norm(op: &dyn LinearOperator, iters: usize, seed: u64) -> f64 {
    let n = op.dim();
    if n == 0 {
        return 0.0;
    }
    let mut s = seed | 1;
    let mut x = BlockVectors::from_fn(n, 1, |_, _| {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    let mut y = BlockVectors::zeros(n, 1);
    let mut est = 0.0_f64;
    for _ in 0..iters {
        let nx = dot(x.col(0), x.col(0)).sqrt();
        if nx == 0.0 {
            return 0.0;
        }
        x.col_mut(0).iter_mut().for_each(|v| *v /= nx);
        op.apply(&x, &mut y);
        let ny = dot(y.col(0), y.col(0)).sqrt();
        est = est.max(ny);
        std::mem::swap(&mut x, &mut y);
    }
    est * 1.01
}

/// Rows of the operator applied to the all-ones vector.
pub fn row_sums(op: &dyn LinearOperator) -> Vec<f64> {
    let n = op.dim();
    let x = BlockVectors::from_fn(n, 1, |_, _| 1.0);
    let mut y = BlockVectors::zeros(n, 1);
    op.apply(&x, &mut y);
    y.col(0).to_vec()
}

#[allow(dead_code)]
pub(crate) fn par_dot_cols(x: &BlockVectors, y: &BlockVectors) -> Vec<f64> {
    (0..x.ncols()).into_par_iter().map(|j| dot(x.col(j), y.col(j))).collect()
}
