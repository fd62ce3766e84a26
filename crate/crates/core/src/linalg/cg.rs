use rayon::prelude::*;

use super::block::BlockVectors;
use super::dense::{axpy, dot, norm2};
use super::operator::LinearOperator;
use crate::error::{check_dim, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgColumnReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    pub breakdown: bool,
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: BlockVectors,
    pub columns: Vec<CgColumnReport>,
}

impl CgOutcome {
    pub fn breakdown(&self) -> bool {
        self.columns.iter().any(|c| c.breakdown)
    }

    pub fn all_converged(&self) -> bool {
        self.columns.iter().all(|c| c.converged)
    }

    pub fn total_iterations(&self) -> usize {
        self.columns.iter().map(|c| c.iterations).sum()
    }
}

/// Unpreconditioned CG, run independently on each column of `rhs`.
///
/// Stops a column once `‖op·x − b‖ ≤ tol·‖b‖` or after `max_iter` steps,
/// and returns the last iterate either way. A non-positive curvature
/// `pᵀ op p ≤ 0` stops the column and sets `breakdown`.
pub fn cg_solve(
    op: &dyn LinearOperator,
    rhs: &BlockVectors,
    x0: &BlockVectors,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = op.dim();
    check_dim("cg_solve rhs", n, rhs.dim())?;
    check_dim("cg_solve x0 rows", n, x0.dim())?;
    check_dim("cg_solve x0 cols", rhs.ncols(), x0.ncols())?;

    let results: Vec<(Vec<f64>, CgColumnReport)> = (0..rhs.ncols())
        .into_par_iter()
        .map(|j| cg_column(op, rhs.col(j), x0.col(j), tol, max_iter))
        .collect();

    let mut x = BlockVectors::zeros(n, rhs.ncols());
    let mut columns = Vec::with_capacity(results.len());
    for (j, (xj, rep)) in results.into_iter().enumerate() {
        x.col_mut(j).copy_from_slice(&xj);
        columns.push(rep);
    }
    Ok(CgOutcome { x, columns })
}

fn cg_column(op: &dyn LinearOperator, b: &[f64], x0: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, CgColumnReport) {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = BlockVectors::from_col_major(n, 1, x0.to_vec()).expect("shape");
    let mut ap = BlockVectors::zeros(n, 1);
    op.apply(&x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(ap.col(0)).map(|(b, a)| b - a).collect();
    let mut rr = dot(&r, &r);
    let target = tol * bnorm;
    let mut rep = CgColumnReport { iterations: 0, relative_residual: 0.0, converged: false, breakdown: false };
    let rel = |rr: f64| if bnorm > 0.0 { rr.sqrt() / bnorm } else { rr.sqrt() };

    if rr.sqrt() <= target || rr == 0.0 {
        rep.converged = true;
        rep.relative_residual = rel(rr);
        return (x.col(0).to_vec(), rep);
    }
    let mut p = BlockVectors::from_col_major(n, 1, r.clone()).expect("shape");
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(p.col(0), ap.col(0));
        if pap <= 0.0 || !pap.is_finite() {
            rep.breakdown = true;
            rep.iterations = it - 1;
            break;
        }
        let alpha = rr / pap;
        axpy(alpha, p.col(0), x.col_mut(0));
        axpy(-alpha, ap.col(0), &mut r);
        let rr_new = dot(&r, &r);
        rep.iterations = it;
        if rr_new.sqrt() <= target {
            rr = rr_new;
            rep.converged = true;
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.col_mut(0).iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    rep.relative_residual = rel(rr);
    (x.col(0).to_vec(), rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CsrMatrix, DiagonalOperator};

    #[test]
    fn zero_rhs() {
        let op = DiagonalOperator::new(vec![1.0; 4]);
        let z = BlockVectors::zeros(4, 2);
        let out = cg_solve(&op, &z, &z, 1e-10, 10).unwrap();
        assert_eq!(out.x, z);
        assert!(out.columns.iter().all(|c| c.iterations == 0 && c.converged));
    }

    #[test]
    fn scaled_identity_one_step() {
        let op = DiagonalOperator::new(vec![2.0; 5]);
        let b = BlockVectors::from_fn(5, 1, |i, _| i as f64 + 1.0);
        let out = cg_solve(&op, &b, &BlockVectors::zeros(5, 1), 1e-14, 5).unwrap();
        assert_eq!(out.columns[0].iterations, 1);
        for i in 0..5 {
            assert!((out.x.col(0)[i] - b.col(0)[i] / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn indefinite_flags_breakdown() {
        let op = DiagonalOperator::new(vec![1.0, -1.0]);
        let b = BlockVectors::from_col_major(2, 1, vec![1.0, 1.0]).unwrap();
        let out = cg_solve(&op, &b, &BlockVectors::zeros(2, 1), 1e-12, 10).unwrap();
        assert!(out.breakdown());
    }

    #[test]
    fn max_iter_returns_iterate() {
        let t = CsrMatrix::tridiag_t(50, 0.0);
        let b = BlockVectors::from_fn(50, 1, |i, _| (i as f64).sin());
        let out = cg_solve(&t, &b, &BlockVectors::zeros(50, 1), 1e-14, 3).unwrap();
        assert_eq!(out.columns[0].iterations, 3);
        assert!(!out.columns[0].converged);
    }
}
