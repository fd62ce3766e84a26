//! The projected `d×d` problem `K̂ x̂ = λ ŷ`, `M̂ ŷ = λ x̂` and its solution
//! by two Cholesky factorizations and one SVD.

use nalgebra::DMatrix;

use crate::biorth::{mgs_biorth, DEFAULT_DROP_TOL};
use crate::error::{check_dim, Error, Result};
use crate::linalg::block::{block_apply, plain_gram, BlockVectors};
use crate::linalg::dense::dot;
use crate::linalg::{DenseMatrix, InnerProduct, LinearOperator};

/// Singular values below this fraction of the largest are treated as zero
/// eigenvalues that should have been deflated.
pub const DEGENERATE_REL_TOL: f64 = 1e-14;

/// Deviation of `X̂ᵀŶ` from `I` accepted without another correction step.
const NEWTON_SCHULZ_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct ProjectedLrep {
    pub khat: DenseMatrix,
    pub mhat: DenseMatrix,
    lk: DenseMatrix,
    lm: DenseMatrix,
}

impl ProjectedLrep {
    /// Symmetrizes both blocks and factors them. A failed factorization is
    /// reported as [`Error::NullspaceLeak`].
    pub fn new(khat: &DenseMatrix, mhat: &DenseMatrix) -> Result<Self> {
        check_dim("projected K rows", khat.rows(), khat.cols())?;
        check_dim("projected blocks", khat.rows(), mhat.rows())?;
        let khat = khat.symmetrized()?;
        let mhat = mhat.symmetrized()?;
        let lk = leak_on_failure(khat.cholesky(), "K")?;
        let lm = leak_on_failure(mhat.cholesky(), "M")?;
        Ok(Self { khat, mhat, lk, lm })
    }

    pub fn d(&self) -> usize {
        self.khat.rows()
    }
}

fn leak_on_failure(r: Result<DenseMatrix>, block: &'static str) -> Result<DenseMatrix> {
    r.map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, value } => Error::NullspaceLeak { block, pivot, value },
        other => other,
    })
}

#[derive(Debug, Clone)]
pub struct SmallEigenSolution {
    /// Ascending, strictly positive.
    pub lambdas: Vec<f64>,
    pub xhat: DenseMatrix,
    pub yhat: DenseMatrix,
}

/// Deviations of a small solution from its defining identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallIdentityReport {
    /// `max |X̂ᵀŶ − I|`.
    pub biorth: f64,
    /// `max_j ‖K̂ x̂_j − λ_j ŷ_j‖ / ‖K̂‖_F`.
    pub k_residual: f64,
    /// `max_j ‖M̂ ŷ_j − λ_j x̂_j‖ / ‖M̂‖_F`.
    pub m_residual: f64,
}

impl SmallEigenSolution {
    pub fn k(&self) -> usize {
        self.lambdas.len()
    }

    pub fn identities(&self, p: &ProjectedLrep) -> SmallIdentityReport {
        let k = self.k();
        let g = self.xhat.tr_matmul(&self.yhat).expect("shapes");
        let biorth = g.sub(&DenseMatrix::identity(k)).expect("shapes").max_abs();
        let kx = p.khat.matmul(&self.xhat).expect("shapes");
        let my = p.mhat.matmul(&self.yhat).expect("shapes");
        let col_res = |a: &DenseMatrix, b: &DenseMatrix| {
            (0..k)
                .map(|j| {
                    a.col(j)
                        .iter()
                        .zip(b.col(j))
                        .map(|(u, v)| (u - self.lambdas[j] * v).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max)
        };
        SmallIdentityReport {
            biorth,
            k_residual: col_res(&kx, &self.yhat) / p.khat.frobenius_norm().max(f64::MIN_POSITIVE),
            m_residual: col_res(&my, &self.xhat) / p.mhat.frobenius_norm().max(f64::MIN_POSITIVE),
        }
    }
}

/// `K̂ = Uᵀ K U`, `M̂ = Vᵀ M V`. Both products use the plain transpose: the
/// weight of a generalized problem enters only through `UᵀBV = I`.
pub fn assemble_projected(
    k: &dyn LinearOperator,
    m: &dyn LinearOperator,
    u: &BlockVectors,
    v: &BlockVectors,
) -> Result<ProjectedLrep> {
    let ku = block_apply(k, u)?;
    let mv = block_apply(m, v)?;
    assemble_from_images(u, &ku, v, &mv)
}

/// As [`assemble_projected`] with precomputed `KU` and `MV`.
pub fn assemble_from_images(
    u: &BlockVectors,
    ku: &BlockVectors,
    v: &BlockVectors,
    mv: &BlockVectors,
) -> Result<ProjectedLrep> {
    check_dim("assemble U vs KU", u.ncols(), ku.ncols())?;
    check_dim("assemble V vs MV", v.ncols(), mv.ncols())?;
    check_dim("assemble U vs V", u.ncols(), v.ncols())?;
    ProjectedLrep::new(&plain_gram(u, ku), &plain_gram(v, mv))
}

/// The `k` smallest positive eigenpairs of the projected problem.
///
/// With `K̂ = LLᵀ`, `M̂ = RRᵀ` and `LᵀR = ΦΣΨᵀ`, the eigenvalues are the
/// singular values and `Ŷ = LΦΣ^{-1/2}`, `X̂ = RΨΣ^{-1/2}`.
pub fn solve_small_lrep(p: &ProjectedLrep, k: usize) -> Result<SmallEigenSolution> {
    let d = p.d();
    if k > d {
        return Err(Error::InvalidArgument(format!("requested {k} eigenpairs of a {d}-dimensional problem")));
    }
    let w = p.lk.tr_matmul(&p.lm)?;
    let svd = w.jacobi_svd();
    let sigma_max = svd.singular_values.first().copied().unwrap_or(0.0);
    let threshold = DEGENERATE_REL_TOL * sigma_max;
    if let Some(&smin) = svd.singular_values.last() {
        if !(smin > threshold) {
            return Err(Error::DegenerateSpectrum { sigma: smin, threshold });
        }
    }
    // singular values come out descending
    let idx: Vec<usize> = (0..k).map(|j| d - 1 - j).collect();
    let lambdas: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let mut phi = svd.u.select_columns(&idx);
    let mut psi = svd.v.select_columns(&idx);
    for (j, &s) in lambdas.iter().enumerate() {
        let f = 1.0 / s.sqrt();
        phi.col_mut(j).iter_mut().for_each(|e| *e *= f);
        psi.col_mut(j).iter_mut().for_each(|e| *e *= f);
    }
    let yhat = p.lk.matmul(&phi)?;
    let xhat = p.lm.matmul(&psi)?;
    // The absolute SVD error is magnified by Σ^{-1/2} at the small end, so
    // X̂ᵀŶ drifts from I. Newton–Schulz steps Ŷ ← Ŷ(2I − X̂ᵀŶ) square the
    // deviation each time and move Ŷ only at that level.
    let mut yhat = yhat;
    for _ in 0..3 {
        let mut e = xhat.tr_matmul(&yhat)?;
        for i in 0..k {
            e[(i, i)] -= 1.0;
        }
        if e.max_abs() <= NEWTON_SCHULZ_TOL {
            break;
        }
        yhat = yhat.sub(&yhat.matmul(&e)?)?;
    }
    // With X̂ᵀŶ = I the quotient √((x̂ᵀK̂x̂)(ŷᵀM̂ŷ)) is second order in the
    // vector error, so it is more accurate than σ itself at the small end.
    let kx = p.khat.matmul(&xhat)?;
    let my = p.mhat.matmul(&yhat)?;
    let lambdas = (0..k).map(|j| (dot(xhat.col(j), kx.col(j)) * dot(yhat.col(j), my.col(j))).sqrt()).collect();
    Ok(SmallEigenSolution { lambdas, xhat, yhat })
}

fn to_na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(a.rows(), a.cols(), a.as_slice())
}

/// Positive eigenvalues, ascending, of `[[0, K], [M, 0]]` for arbitrary
/// square blocks, computed by a general real Schur decomposition. Values
/// with imaginary part or magnitude below `zero_tol·max|λ|` are discarded.
pub fn lrep_oracle_eigenvalues(k: &DenseMatrix, m: &DenseMatrix, zero_tol: f64) -> Result<Vec<f64>> {
    let h = full_h(k, m)?;
    let ev = h.complex_eigenvalues();
    let scale = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut out: Vec<f64> = ev
        .iter()
        .filter(|z| z.re > zero_tol * scale && z.im.abs() <= 1e-8 * scale.max(1.0))
        .map(|z| z.re)
        .collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

fn full_h(k: &DenseMatrix, m: &DenseMatrix) -> Result<DMatrix<f64>> {
    let d = k.rows();
    check_dim("oracle K square", d, k.cols())?;
    check_dim("oracle M", d, m.rows())?;
    check_dim("oracle M square", d, m.cols())?;
    let mut h = DMatrix::<f64>::zeros(2 * d, 2 * d);
    h.view_mut((0, d), (d, d)).copy_from(&to_na(k));
    h.view_mut((d, 0), (d, d)).copy_from(&to_na(m));
    Ok(h)
}

/// Brute-force reference solution of the projected problem: eigenvalues
/// from a dense nonsymmetric eigensolver on the `2d×2d` matrix, eigenvectors
/// by inverse iteration per cluster, biorthonormalized.
pub fn dense_lrep_oracle(p: &ProjectedLrep) -> Result<SmallEigenSolution> {
    let d = p.d();
    let lambdas = lrep_oracle_eigenvalues(&p.khat, &p.mhat, 1e-13)?;
    if lambdas.len() != d {
        return Err(Error::NumericalAbort(format!("oracle found {} positive eigenvalues, expected {d}", lambdas.len())));
    }
    let h = full_h(&p.khat, &p.mhat)?;
    let mut xhat = DenseMatrix::zeros(d, d);
    let mut yhat = DenseMatrix::zeros(d, d);
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && (lambdas[end] - lambdas[start]).abs() <= 1e-8 * lambdas[start].abs() {
            end += 1;
        }
        let width = end - start;
        let (xs, ys) = cluster_vectors(&h, lambdas[start], width, start as u64)?;
        let out = mgs_biorth(&xs, &ys, &InnerProduct::identity(), DEFAULT_DROP_TOL)?;
        if out.basis.len() != width {
            return Err(Error::NumericalAbort(format!("oracle cluster at {} lost rank", lambdas[start])));
        }
        for j in 0..width {
            xhat.col_mut(start + j).copy_from_slice(out.basis.p.col(j));
            yhat.col_mut(start + j).copy_from_slice(out.basis.q.col(j));
        }
        start = end;
    }
    Ok(SmallEigenSolution { lambdas, xhat, yhat })
}

fn cluster_vectors(h: &DMatrix<f64>, lambda: f64, width: usize, seed: u64) -> Result<(BlockVectors, BlockVectors)> {
    let n2 = h.nrows();
    let d = n2 / 2;
    let shift = lambda * (1.0 + 1e-10) + 1e-300;
    let a = h - DMatrix::<f64>::identity(n2, n2) * shift;
    let lu = a.lu();
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let mut v = DMatrix::<f64>::from_fn(n2, width, |_, _| {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    for _ in 0..3 {
        v = lu
            .solve(&v)
            .ok_or_else(|| Error::NumericalAbort("oracle inverse iteration hit a singular shift".into()))?;
        for mut c in v.column_iter_mut() {
            let nrm = c.norm();
            c /= nrm;
        }
    }
    // the vector is [y; x]
    let y = BlockVectors::from_fn(d, width, |i, j| v[(i, j)]);
    let x = BlockVectors::from_fn(d, width, |i, j| v[(d + i, j)]);
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DenseMatrix {
        DenseMatrix::from_diagonal(v)
    }

    #[test]
    fn one_by_one() {
        let p = ProjectedLrep::new(&diag(&[4.0]), &diag(&[9.0])).unwrap();
        let s = solve_small_lrep(&p, 1).unwrap();
        assert!((s.lambdas[0] - 6.0).abs() < 1e-14);
        assert!((s.yhat[(0, 0)] - 2.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((s.xhat[(0, 0)] - 3.0 / 6f64.sqrt()).abs() < 1e-15);
        let o = dense_lrep_oracle(&p).unwrap();
        assert!((o.lambdas[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn identity_blocks() {
        let p = ProjectedLrep::new(&DenseMatrix::identity(4), &DenseMatrix::identity(4)).unwrap();
        let s = solve_small_lrep(&p, 4).unwrap();
        assert!(s.lambdas.iter().all(|&l| (l - 1.0).abs() < 1e-14));
        assert!(s.identities(&p).biorth < 1e-14);
    }

    #[test]
    fn commuting_diagonals() {
        let p = ProjectedLrep::new(&diag(&[1.0, 4.0]), &diag(&[9.0, 1.0])).unwrap();
        let s = solve_small_lrep(&p, 2).unwrap();
        assert!((s.lambdas[0] - 2.0).abs() < 1e-14 && (s.lambdas[1] - 3.0).abs() < 1e-14);
        let r = s.identities(&p);
        assert!(r.biorth < 1e-14 && r.k_residual < 1e-14 && r.m_residual < 1e-14, "{r:?}");
        let o = dense_lrep_oracle(&p).unwrap();
        for (a, b) in o.lambdas.iter().zip(&s.lambdas) {
            assert!((a - b).abs() < 1e-10 * b);
        }
    }

    #[test]
    fn tridiagonal_three() {
        let t = crate::linalg::CsrMatrix::tridiag_t(3, 0.0).to_dense();
        let p = ProjectedLrep::new(&t, &t).unwrap();
        let want = [2.0 - 2f64.sqrt(), 2.0, 2.0 + 2f64.sqrt()];
        for s in [solve_small_lrep(&p, 3).unwrap(), dense_lrep_oracle(&p).unwrap()] {
            for (a, b) in s.lambdas.iter().zip(want) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn indefinite_block_is_a_leak() {
        let e = ProjectedLrep::new(&diag(&[1.0, 0.0]), &DenseMatrix::identity(2)).unwrap_err();
        assert!(matches!(e, Error::NullspaceLeak { block: "K", pivot: 1, .. }), "{e}");
        let e = ProjectedLrep::new(&DenseMatrix::identity(2), &diag(&[-1.0, 1.0])).unwrap_err();
        assert!(matches!(e, Error::NullspaceLeak { block: "M", pivot: 0, .. }), "{e}");
    }

    #[test]
    fn tiny_singular_value_is_degenerate() {
        let p = ProjectedLrep::new(&diag(&[1.0, 1e-30]), &diag(&[1.0, 1.0])).unwrap();
        let e = solve_small_lrep(&p, 1).unwrap_err();
        assert!(matches!(e, Error::DegenerateSpectrum { .. }), "{e}");
    }

    #[test]
    fn assembly_with_unit_columns() {
        let t = crate::linalg::CsrMatrix::tridiag_t(3, 0.0);
        let e1 = BlockVectors::unit_columns(3, &[0]);
        let p = assemble_projected(&t, &t, &e1, &e1).unwrap();
        assert_eq!(p.khat.as_slice(), &[2.0]);
        assert_eq!(p.mhat.as_slice(), &[2.0]);
        let id = BlockVectors::unit_columns(3, &[0, 1, 2]);
        let p = assemble_projected(&t, &t, &id, &id).unwrap();
        assert_eq!(p.khat, t.to_dense());
    }
}
