//! Small dense matrices in column-major storage, with the Cholesky and
//! one-sided Jacobi SVD kernels used by the projected solver.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{check_dim, Error, Result};

#[derive(Clone)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    symmetric: bool,
}

impl PartialEq for DenseMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.data == other.data
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{}{}", self.rows, self.cols, if self.symmetric { " (sym)" } else { "" })?;
        for i in 0..self.rows.min(12) {
            let row: Vec<String> = (0..self.cols.min(8)).map(|j| format!("{:>12.5e}", self[(i, j)])).collect();
            writeln!(f, "  [{}]", row.join(" "))?;
        }
        Ok(())
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols], symmetric: false }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m.symmetric = true;
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m.symmetric = true;
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("DenseMatrix::from_col_major", rows * cols, data.len())?;
        Ok(Self { rows, cols, data, symmetric: false })
    }

    /// Builds a matrix from row slices; all rows must share a length.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            check_dim("DenseMatrix::from_rows", c, row.len())?;
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.data[i + j * rows] = f(i, j);
            }
        }
        m
    }

    /// Symmetric matrix whose entries come from the lower triangle of `f`
    /// (`i >= j`); the upper triangle is mirrored, so symmetry is exact.
    pub fn symmetric_from_lower(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = f(i, j);
                m.data[i + j * n] = v;
                m.data[j + i * n] = v;
            }
        }
        m.symmetric = true;
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// True when the matrix was built through a symmetric constructor.
    pub fn is_symmetric_flagged(&self) -> bool {
        self.symmetric
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        self.symmetric = false;
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)]);
        t.symmetric = self.symmetric;
        t
    }

    /// `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim("DenseMatrix::matmul", self.cols, other.rows)?;
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let oc = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for l in 0..self.cols {
                let c = other[(l, j)];
                if c == 0.0 {
                    continue;
                }
                for (o, a) in oc.iter_mut().zip(self.col(l)) {
                    *o += a * c;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ * other`.
    pub fn tr_matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim("DenseMatrix::tr_matmul", self.rows, other.rows)?;
        Ok(DenseMatrix::from_fn(self.cols, other.cols, |i, j| dot(self.col(i), other.col(j))))
    }

    pub fn scaled(&self, alpha: f64) -> DenseMatrix {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= alpha);
        m
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim("DenseMatrix::sub(rows)", self.rows, other.rows)?;
        check_dim("DenseMatrix::sub(cols)", self.cols, other.cols)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(DenseMatrix { rows: self.rows, cols: self.cols, data, symmetric: self.symmetric && other.symmetric })
    }

    /// `(A + Aᵀ)/2`, flagged symmetric.
    pub fn symmetrized(&self) -> Result<DenseMatrix> {
        if !self.is_square() {
            return Err(Error::InvalidArgument(format!("cannot symmetrize a {}x{} matrix", self.rows, self.cols)));
        }
        Ok(DenseMatrix::symmetric_from_lower(self.rows, |i, j| 0.5 * (self[(i, j)] + self[(j, i)])))
    }

    pub fn select_columns(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for &j in idx {
            data.extend_from_slice(self.col(j));
        }
        DenseMatrix { rows: self.rows, cols: idx.len(), data, symmetric: false }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for j in 0..self.cols.min(self.rows) {
            for i in j + 1..self.rows.min(self.cols) {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        self.jacobi_svd().singular_values.first().copied().unwrap_or(0.0)
    }

    /// Lower Cholesky factor `L` with `A = L Lᵀ`. Only the lower triangle of
    /// `A` is read.
    pub fn cholesky(&self) -> Result<DenseMatrix> {
        if !self.is_square() {
            return Err(Error::InvalidArgument(format!("cholesky of a {}x{} matrix", self.rows, self.cols)));
        }
        let n = self.rows;
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(l)
    }

    /// Inverse of a lower-triangular matrix (upper triangle ignored).
    pub fn lower_triangular_inverse(&self) -> Result<DenseMatrix> {
        let n = self.rows;
        check_dim("lower_triangular_inverse", n, self.cols)?;
        let mut inv = DenseMatrix::zeros(n, n);
        for j in 0..n {
            // solve L x = e_j by forward substitution
            for i in j..n {
                let mut s = if i == j { 1.0 } else { 0.0 };
                for k in j..i {
                    s -= self[(i, k)] * inv[(k, j)];
                }
                let d = self[(i, i)];
                if d == 0.0 {
                    return Err(Error::InvalidArgument("singular triangular matrix".into()));
                }
                inv[(i, j)] = s / d;
            }
        }
        Ok(inv)
    }

    /// Thin SVD `A = U Σ Vᵀ` by one-sided (Hestenes) Jacobi rotations.
    ///
    /// `A` is first reduced by two column-pivoted Householder QR passes and
    /// the rotations act on the resulting triangular factor, which keeps the
    /// relative accuracy of the small singular values for graded inputs.
    /// Column orthogonality is driven to `|g_pᵀg_q| <= √n·eps·‖g_p‖‖g_q‖`.
    /// Singular values come back in descending order.
    pub fn jacobi_svd(&self) -> Svd {
        if self.rows < self.cols {
            let t = self.transpose().jacobi_svd();
            return Svd { u: t.v, singular_values: t.singular_values, v: t.u };
        }
        let (m, n) = (self.rows, self.cols);
        let (q1, r1, perm) = self.pivoted_qr();
        // second pass on R₁ᵀ: R₁ᵀΠ₂ = Q₂R₂, so R₁ = Π₂ X Q₂ᵀ with X = R₂ᵀ
        let (q2, r2, perm2) = r1.transpose().pivoted_qr();
        let mut g = r2.transpose().data;
        let j = hestenes(&mut g, n, n);
        let sigma: Vec<f64> = (0..n).map(|c| norm2(&g[c * n..(c + 1) * n])).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));

        // X J = G = U_X Σ gives A = (Q₁ Π₂ U_X) Σ (Π₁ Q₂ J)ᵀ
        let q2j = q2.matmul(&DenseMatrix { rows: n, cols: n, data: j, symmetric: false }).expect("shapes");
        let mut u = DenseMatrix::zeros(m, n);
        let mut v = DenseMatrix::zeros(n, n);
        let mut s_sorted = Vec::with_capacity(n);
        let mut ux = vec![0.0; n];
        for (dst, &src) in order.iter().enumerate() {
            let sv = sigma[src];
            s_sorted.push(sv);
            if sv > 0.0 {
                // Π₂ U_X column, then Q₁ times it
                let gc = &g[src * n..(src + 1) * n];
                for (i, x) in gc.iter().enumerate() {
                    ux[perm2[i]] = x / sv;
                }
                let uc = u.col_mut(dst);
                uc.iter_mut().for_each(|e| *e = 0.0);
                for (l, &c) in ux.iter().enumerate() {
                    if c != 0.0 {
                        axpy(c, q1.col(l), uc);
                    }
                }
            }
            let vc = v.col_mut(dst);
            for (i, x) in q2j.col(src).iter().enumerate() {
                vc[perm[i]] = *x;
            }
        }
        Svd { u, singular_values: s_sorted, v }
    }

    /// Householder QR with column pivoting, `A Π = Q R` for `rows >= cols`.
    /// Returns thin `Q`, square upper triangular `R` and `perm` with
    /// `(AΠ)[:, i] = A[:, perm[i]]`.
    fn pivoted_qr(&self) -> (DenseMatrix, DenseMatrix, Vec<usize>) {
        let (m, n) = (self.rows, self.cols);
        let mut a = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut vs: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n);
        for k in 0..n {
            // pivot: largest remaining column norm below row k
            let (mut best, mut best_norm) = (k, -1.0);
            for c in k..n {
                let nc = sq_norm(&a[c * m + k..(c + 1) * m]);
                if nc > best_norm {
                    best = c;
                    best_norm = nc;
                }
            }
            if best != k {
                let (lo, hi) = a.split_at_mut(best * m);
                lo[k * m..(k + 1) * m].swap_with_slice(&mut hi[..m]);
                perm.swap(k, best);
            }
            let x = &a[k * m + k..(k + 1) * m];
            let alpha = norm2(x);
            let mut v = x.to_vec();
            // reflect onto +‖x‖e₁; for x₀ > 0 the difference x₀ − ‖x‖ is
            // formed without cancellation
            let tau = if alpha == 0.0 {
                0.0
            } else {
                v[0] = if x[0] <= 0.0 { x[0] - alpha } else { -sq_norm(&x[1..]) / (x[0] + alpha) };
                let vv = sq_norm(&v);
                if vv == 0.0 { 0.0 } else { 2.0 / vv }
            };
            if tau != 0.0 {
                for c in k..n {
                    let col = &mut a[c * m + k..(c + 1) * m];
                    let f = tau * dot(&v, col);
                    axpy(-f, &v, col);
                }
                // exact zeros under the diagonal
                for e in &mut a[k * m + k + 1..(k + 1) * m] {
                    *e = 0.0;
                }
            }
            vs.push((v, tau));
        }
        let mut r = DenseMatrix::zeros(n, n);
        for c in 0..n {
            for i in 0..=c {
                r[(i, c)] = a[c * m + i];
            }
        }
        let mut q = DenseMatrix::zeros(m, n);
        for c in 0..n {
            q[(c, c)] = 1.0;
        }
        for (k, (v, tau)) in vs.iter().enumerate().rev() {
            if *tau == 0.0 {
                continue;
            }
            for c in 0..n {
                let col = &mut q.col_mut(c)[k..];
                let f = tau * dot(v, col);
                axpy(-f, v, col);
            }
        }
        (q, r, perm)
    }
}

/// One-sided Jacobi on the `m×n` column-major block `g`, in place. Returns
/// the accumulated `n×n` rotation.
fn hestenes(g: &mut [f64], m: usize, n: usize) -> Vec<f64> {
    let mut v = DenseMatrix::identity(n).data;
    let tol = (m as f64).sqrt() * f64::EPSILON;
    let mut norms: Vec<f64> = (0..n).map(|j| sq_norm(&g[j * m..(j + 1) * m])).collect();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta) = (norms[p], norms[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let (gp, gq) = two_cols(g, m, p, q);
                let gamma = dot(gp, gq);
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(gp, gq, c, s);
                norms[p] = (alpha - t * gamma).max(0.0);
                norms[q] = beta + t * gamma;
                let (vp, vq) = two_cols(&mut v, n, p, q);
                rotate(vp, vq, c, s);
            }
        }
        if !rotated {
            break;
        }
        // the updated norms drift slowly; refresh once per sweep
        for (j, nj) in norms.iter_mut().enumerate() {
            *nj = sq_norm(&g[j * m..(j + 1) * m]);
        }
    }
    v
}

/// Thin singular value decomposition; `singular_values` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    /// Ratio of largest to smallest singular value (infinite when rank deficient).
    pub fn condition_number(&self) -> f64 {
        match (self.singular_values.first(), self.singular_values.last()) {
            (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
            (Some(_), Some(_)) => f64::INFINITY,
            _ => 1.0,
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i + j * self.rows]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.symmetric = false;
        &mut self.data[i + j * self.rows]
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four partial sums keep the reduction order fixed while letting the
    // compiler vectorize.
    let mut acc = [0.0_f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[inline]
pub(crate) fn sq_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub(crate) fn norm2(a: &[f64]) -> f64 {
    sq_norm(a).sqrt()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn two_cols(data: &mut [f64], m: usize, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (lo, hi) = data.split_at_mut(q * m);
    (&mut lo[p * m..(p + 1) * m], &mut hi[..m])
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_constructor_is_bit_exact() {
        let m = DenseMatrix::symmetric_from_lower(5, |i, j| (i as f64 + 0.3) / (j as f64 + 1.7));
        assert!(m.is_symmetric_flagged());
        assert_eq!(m.max_asymmetry(), 0.0);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = DenseMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 - 2.5);
        let b = DenseMatrix::from_fn(3, 2, |i, j| 1.0 / (1.0 + i as f64 + 2.0 * j as f64));
        let c = a.matmul(&b).unwrap();
        for i in 0..4 {
            for j in 0..2 {
                let mut s = 0.0;
                for l in 0..3 {
                    s += a[(i, l)] * b[(l, j)];
                }
                assert!((c[(i, j)] - s).abs() < 1e-15);
            }
        }
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn cholesky_reconstructs_and_rejects_indefinite() {
        let a = DenseMatrix::from_rows(&[&[4.0, 2.0, 0.4], &[2.0, 5.0, 1.0], &[0.4, 1.0, 3.0]]).unwrap();
        let l = a.cholesky().unwrap();
        let back = l.matmul(&l.transpose()).unwrap();
        assert!(back.sub(&a).unwrap().max_abs() < 1e-14);
        let bad = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        assert!(matches!(bad.cholesky(), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
    }

    #[test]
    fn triangular_inverse() {
        let a = DenseMatrix::from_rows(&[&[4.0, 2.0, 0.4], &[2.0, 5.0, 1.0], &[0.4, 1.0, 3.0]]).unwrap();
        let l = a.cholesky().unwrap();
        let li = l.lower_triangular_inverse().unwrap();
        let id = l.matmul(&li).unwrap();
        assert!(id.sub(&DenseMatrix::identity(3)).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn jacobi_svd_reconstructs() {
        let a = DenseMatrix::from_fn(6, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.0 + 0.1 * j as f64);
        let svd = a.jacobi_svd();
        let us = DenseMatrix::from_fn(6, 4, |i, j| svd.u[(i, j)] * svd.singular_values[j]);
        let back = us.matmul(&svd.v.transpose()).unwrap();
        assert!(back.sub(&a).unwrap().max_abs() < 1e-13);
        assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let vtv = svd.v.tr_matmul(&svd.v).unwrap();
        assert!(vtv.sub(&DenseMatrix::identity(4)).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn jacobi_svd_of_graded_diagonal_is_exact() {
        let a = DenseMatrix::from_diagonal(&[1e-12, 3.0, 1e-6]);
        let svd = a.jacobi_svd();
        assert_eq!(svd.singular_values, vec![3.0, 1e-6, 1e-12]);
    }

    #[test]
    fn wide_svd_goes_through_transpose() {
        let a = DenseMatrix::from_rows(&[&[3.0, 0.0, 4.0]]).unwrap();
        let svd = a.jacobi_svd();
        assert_eq!(svd.singular_values.len(), 1);
        assert!((svd.singular_values[0] - 5.0).abs() < 1e-15);
        assert!((a.spectral_norm() - 5.0).abs() < 1e-15);
    }
}
