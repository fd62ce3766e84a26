//! Generalized nullspace `{x⁰ : K x⁰ = 0}` with partners `M y⁰ = B x⁰`,
//! normalized so that `X0ᵀ B Y0 = I`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::biorth::BiorthBasis;
use crate::error::{Error, Result};
use crate::linalg::block::{block_apply, block_inner, block_product, plain_gram, BlockVectors};
use crate::linalg::operator::estimate_norm;
use crate::linalg::{cg_solve, DenseMatrix, InnerProduct, LinearOperator, ShiftedOperator};

pub const DEFAULT_TOL_NULL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedNullspace {
    pub r: usize,
    pub x0: BlockVectors,
    pub y0: BlockVectors,
}

/// Measured deviations from the nullspace contract.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullspaceReport {
    /// `max_i ‖K x⁰_i‖ / ‖K‖_est`.
    pub k_residual: f64,
    /// `max_i ‖M y⁰_i − B x⁰_i‖`.
    pub m_residual: f64,
    /// `max |X0ᵀ B Y0 − I|`.
    pub biorth: f64,
}

impl GeneralizedNullspace {
    pub fn empty(n: usize) -> Self {
        Self { r: 0, x0: BlockVectors::zeros(n, 0), y0: BlockVectors::zeros(n, 0) }
    }

    pub fn dim(&self) -> usize {
        self.x0.dim()
    }

    pub fn basis(&self) -> BiorthBasis {
        BiorthBasis { p: self.x0.clone(), q: self.y0.clone() }
    }

    pub fn check(&self, k: &dyn LinearOperator, m: &dyn LinearOperator, ip: &InnerProduct) -> Result<NullspaceReport> {
        if self.r == 0 {
            return Ok(NullspaceReport { k_residual: 0.0, m_residual: 0.0, biorth: 0.0 });
        }
        let knorm = estimate_norm(k, 50, 7).max(f64::MIN_POSITIVE);
        let kx = block_apply(k, &self.x0)?;
        let my = block_apply(m, &self.y0)?;
        let bx = ip.apply_weight(&self.x0)?;
        let k_residual = kx.column_norms().into_iter().fold(0.0, f64::max) / knorm;
        let m_residual = my.sub(&bx)?.column_norms().into_iter().fold(0.0, f64::max);
        let g = block_inner(ip, &self.x0, &self.y0)?;
        let biorth = g.sub(&DenseMatrix::identity(self.r))?.max_abs();
        Ok(NullspaceReport { k_residual, m_residual, biorth })
    }

    /// Builds the normalized pair from raw nullspace vectors `x̃` and
    /// partners `ỹ`: with `x̃ᵀBỹ = LLᵀ`, returns `x̃L⁻ᵀ`, `ỹL⁻ᵀ`.
    pub fn from_raw(xt: BlockVectors, yt: BlockVectors, ip: &InnerProduct) -> Result<Self> {
        let r = xt.ncols();
        if r == 0 {
            return Ok(Self::empty(xt.dim()));
        }
        let g = block_inner(ip, &xt, &yt)?.symmetrized()?;
        let l = g
            .cholesky()
            .map_err(|e| Error::InvalidNullspace(format!("Gram matrix of nullspace pair is not SPD: {e}")))?;
        let lit = l.lower_triangular_inverse()?.transpose();
        Ok(Self { r, x0: block_product(&xt, &lit)?, y0: block_product(&yt, &lit)? })
    }
}

/// Closed-form nullspace pair of `K = T(−1)`, `M = T(0)`: `x⁰` is the
/// all-ones vector and `y⁰_ℓ = ℓ(n−ℓ+1)/2` (1-based), scaled so `x⁰ᵀy⁰ = 1`.
pub fn analytic_nullspace_t(n: usize) -> GeneralizedNullspace {
    let (x, y) = raw_nullspace_t(n);
    let g: f64 = y.iter().sum();
    let s = 1.0 / g.sqrt();
    GeneralizedNullspace {
        r: 1,
        x0: BlockVectors::from_fn(n, 1, |i, _| x[i] * s),
        y0: BlockVectors::from_fn(n, 1, |i, _| y[i] * s),
    }
}

/// The unnormalized pair `(ones, a)`.
pub fn raw_nullspace_t(n: usize) -> (Vec<f64>, Vec<f64>) {
    let x = vec![1.0; n];
    let y = (1..=n).map(|l| (l * (n - l + 1)) as f64 / 2.0).collect();
    (x, y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullspaceOptions {
    pub r_hint: Option<usize>,
    pub tol_null: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for NullspaceOptions {
    fn default() -> Self {
        Self { r_hint: None, tol_null: DEFAULT_TOL_NULL, max_iter: 500, seed: 0x6e75_6c6c }
    }
}

pub fn compute_nullspace(
    k: &dyn LinearOperator,
    m: &dyn LinearOperator,
    r_hint: Option<usize>,
    tol_null: f64,
) -> Result<GeneralizedNullspace> {
    compute_nullspace_with(k, m, &InnerProduct::identity(), &NullspaceOptions { r_hint, tol_null, ..Default::default() })
}

/// Shifted block inverse iteration on `K + σI` with Rayleigh–Ritz, then
/// CG solves `M ỹ = B x̃` for the partners.
pub fn compute_nullspace_with(
    k: &dyn LinearOperator,
    m: &dyn LinearOperator,
    ip: &InnerProduct,
    opts: &NullspaceOptions,
) -> Result<GeneralizedNullspace> {
    let n = k.dim();
    if m.dim() != n {
        return Err(Error::DimensionMismatch { op: "compute_nullspace M", expected: n, got: m.dim() });
    }
    let xt = kernel_vectors(k, opts)?;
    let detected = xt.ncols();
    if let Some(h) = opts.r_hint {
        if h != detected {
            return Err(Error::RankMismatch { expected: h, detected });
        }
    }
    if detected == 0 {
        return Ok(GeneralizedNullspace::empty(n));
    }
    let bx = ip.apply_weight(&xt)?;
    let sol = cg_solve(m, &bx, &BlockVectors::zeros(n, detected), 1e-12, 10 * n.max(10))?;
    if sol.breakdown() {
        return Err(Error::InvalidNullspace("CG on M broke down; M is not positive definite".into()));
    }
    GeneralizedNullspace::from_raw(xt, sol.x, ip)
}

fn orthonormalize(x: &BlockVectors) -> BlockVectors {
    let a = DMatrix::from_column_slice(x.dim(), x.ncols(), x.as_slice());
    let q = a.qr().q();
    BlockVectors::from_col_major(q.nrows(), q.ncols(), q.as_slice().to_vec()).expect("shape")
}

fn random_block(n: usize, b: usize, rng: &mut ChaCha8Rng) -> BlockVectors {
    BlockVectors::from_fn(n, b, |_, _| rng.random_range(-1.0..1.0))
}

/// Orthonormal basis of the numerical kernel of `K`.
fn kernel_vectors(k: &dyn LinearOperator, opts: &NullspaceOptions) -> Result<BlockVectors> {
    let n = k.dim();
    if n == 0 {
        return Ok(BlockVectors::zeros(0, 0));
    }
    let est = estimate_norm(k, 50, opts.seed);
    if est == 0.0 {
        return Ok(BlockVectors::unit_columns(n, &(0..n).collect::<Vec<_>>()));
    }
    let zero_tol = opts.tol_null * est;
    let shifted = ShiftedOperator::new(k, 1e-3 * est);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut b = (opts.r_hint.unwrap_or(0) + 8).max(8).min(n);
    let mut x = orthonormalize(&random_block(n, b, &mut rng));

    for _ in 0..opts.max_iter {
        let sol = cg_solve(&shifted, &x, &BlockVectors::zeros(n, b), 1e-12, 2 * n.max(10))?;
        let y = orthonormalize(&sol.x);
        let ky = block_apply(k, &y)?;
        let a = plain_gram(&y, &ky).symmetrized()?;
        let eig = SymmetricEigen::new(DMatrix::from_column_slice(b, b, a.as_slice()));
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let c = DenseMatrix::from_fn(b, b, |i, j| eig.eigenvectors[(i, order[j])]);
        x = block_product(&y, &c)?;
        let kx = block_product(&ky, &c)?;
        let res: Vec<f64> = (0..b)
            .map(|j| {
                kx.col(j).iter().zip(x.col(j)).map(|(a, v)| (a - theta[j] * v).powi(2)).sum::<f64>().sqrt()
            })
            .collect();

        let z = theta.iter().take_while(|t| t.abs() < zero_tol).count();
        if z == b {
            if b == n {
                return Ok(x);
            }
            let extra = b.min(n - b);
            let mut grown = x.clone();
            grown.push_columns(&random_block(n, extra, &mut rng))?;
            b += extra;
            x = orthonormalize(&grown);
            continue;
        }
        // sin∠(x, kernel) <= ‖r‖ / θ_z, so the bound also scales with the gap
        let sharp = (1e-9 * theta[z]).max(64.0 * f64::EPSILON * est).min(zero_tol);
        let zeros_ok = res[..z].iter().all(|&r| r <= sharp);
        let gap_ok = res[z] <= 1e-3 * theta[z];
        if zeros_ok && gap_ok {
            return Ok(x.column_range(0..z));
        }
    }
    Err(Error::NumericalAbort(format!("nullspace iteration did not converge in {} steps", opts.max_iter)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CsrMatrix, DiagonalOperator, IdentityOperator};

    #[test]
    fn spd_has_no_nullspace() {
        let t = CsrMatrix::tridiag_t(20, 0.0);
        let ns = compute_nullspace(&t, &t, None, DEFAULT_TOL_NULL).unwrap();
        assert_eq!(ns.r, 0);
        assert_eq!(ns.x0.ncols(), 0);
    }

    #[test]
    fn diagonal_kernel() {
        let k = DiagonalOperator::new(vec![0.0, 0.0, 5.0]);
        let m = IdentityOperator::new(3);
        let ns = compute_nullspace(&k, &m, Some(2), DEFAULT_TOL_NULL).unwrap();
        assert_eq!(ns.r, 2);
        for j in 0..2 {
            assert!(ns.x0.col(j)[2].abs() < 1e-12);
        }
        let g = block_inner(&InnerProduct::identity(), &ns.x0, &ns.y0).unwrap();
        assert!(g.sub(&DenseMatrix::identity(2)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn rank_hint_mismatch() {
        let k = DiagonalOperator::new(vec![0.0, 1.0, 5.0]);
        let m = IdentityOperator::new(3);
        let e = compute_nullspace(&k, &m, Some(2), DEFAULT_TOL_NULL).unwrap_err();
        assert!(matches!(e, Error::RankMismatch { expected: 2, detected: 1 }), "{e}");
    }

    #[test]
    fn analytic_pair_small() {
        let (x, y) = raw_nullspace_t(4);
        assert_eq!(x, vec![1.0; 4]);
        assert_eq!(y, vec![2.0, 3.0, 3.0, 2.0]);
        assert_eq!(raw_nullspace_t(5).1, vec![2.5, 4.0, 4.5, 4.0, 2.5]);
        let t0 = CsrMatrix::tridiag_t(4, 0.0);
        let mut my = vec![0.0; 4];
        t0.spmv(&y, &mut my);
        assert_eq!(my, x);
        let ns = analytic_nullspace_t(4);
        assert!((crate::linalg::dense::dot(ns.x0.col(0), ns.y0.col(0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn periodic_kernel_matches_analytic() {
        let n = 4;
        let k = CsrMatrix::tridiag_t(n, -1.0);
        let m = CsrMatrix::tridiag_t(n, 0.0);
        let ns = compute_nullspace(&k, &m, Some(1), DEFAULT_TOL_NULL).unwrap();
        let a = analytic_nullspace_t(n);
        let s = ns.x0.col(0)[0] / a.x0.col(0)[0];
        for i in 0..n {
            assert!((ns.x0.col(0)[i] - s * a.x0.col(0)[i]).abs() < 1e-10);
            assert!((ns.y0.col(0)[i] - a.y0.col(0)[i] / s).abs() < 1e-10);
        }
        let rep = ns.check(&k, &m, &InnerProduct::identity()).unwrap();
        assert!(rep.k_residual < 1e-10 && rep.m_residual < 1e-10 && rep.biorth < 1e-10, "{rep:?}");
    }
}
