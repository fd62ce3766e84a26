//! Loss of biorthogonality on Hilbert/Lauchli column blocks.

use bosp_core::biorth::{biorth_residual, cgs_biorth, mgs_biorth};
use bosp_core::linalg::{BlockVectors, DenseMatrix, InnerProduct};
use bosp_core::Result;

/// Lauchli parameter. `κ(Y) = √(m + μ²)/μ` for the first `m` columns, which
/// gives the 1.41e3 .. 3.16e3 range over `n = 4 .. 20`.
pub const LAUCHLI_MU: f64 = 1e-3;

pub const DEFAULT_SIZES: [usize; 5] = [4, 8, 12, 16, 20];

/// First `m` columns of the `n×n` Hilbert matrix, `h_ij = 1/(i + j + 1)`.
pub fn hilbert_columns(n: usize, m: usize) -> BlockVectors {
    BlockVectors::from_fn(n, m, |i, j| 1.0 / (i + j + 1) as f64)
}

/// First `m` columns of the `n×(n−1)` Lauchli matrix `[1ᵀ; μI]`.
pub fn lauchli_columns(n: usize, m: usize, mu: f64) -> BlockVectors {
    BlockVectors::from_fn(n, m, |i, j| match i {
        0 => 1.0,
        i if i == j + 1 => mu,
        _ => 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub m: usize,
    pub kappa_x: f64,
    pub kappa_y: f64,
    pub sqrt_kappa_xty: f64,
    pub cgs: f64,
    pub mgs: f64,
    /// Columns kept by each scheme.
    pub cgs_kept: usize,
    pub mgs_kept: usize,
}

pub fn bench_row(n: usize, mu: f64) -> Result<BenchRow> {
    let m = n / 2;
    let x = hilbert_columns(n, m);
    let y = lauchli_columns(n, m, mu);
    let ip = InnerProduct::identity();
    let cond = |a: &BlockVectors| a.to_dense().jacobi_svd().condition_number();
    let xty: DenseMatrix = x.to_dense().tr_matmul(&y.to_dense())?;
    let cgs = cgs_biorth(&x, &y, &ip, bosp_core::biorth::DEFAULT_DROP_TOL)?;
    let mgs = mgs_biorth(&x, &y, &ip, bosp_core::biorth::DEFAULT_DROP_TOL)?;
    Ok(BenchRow {
        n,
        m,
        kappa_x: cond(&x),
        kappa_y: cond(&y),
        sqrt_kappa_xty: xty.jacobi_svd().condition_number().sqrt(),
        cgs: biorth_residual(&cgs.basis.p, &cgs.basis.q, &ip)?,
        mgs: biorth_residual(&mgs.basis.p, &mgs.basis.q, &ip)?,
        cgs_kept: cgs.basis.len(),
        mgs_kept: mgs.basis.len(),
    })
}

pub fn run_bench(sizes: &[usize], mu: f64) -> Result<Vec<BenchRow>> {
    sizes.iter().map(|&n| bench_row(n, mu)).collect()
}

pub fn markdown_table(rows: &[BenchRow]) -> String {
    let mut s = String::from("| n | κ(X) | κ(Y) | √κ(XᵀY) | CGS ‖PᵀQ−I‖₂ | MGS ‖PᵀQ−I‖₂ |\n|---|---|---|---|---|---|\n");
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            r.n,
            crate::sci(r.kappa_x, 2),
            crate::sci(r.kappa_y, 2),
            crate::sci(r.sqrt_kappa_xty, 2),
            crate::sci(r.cgs, 2),
            crate::sci(r.mgs, 2)
        ));
    }
    s
}

pub fn csv_table(rows: &[BenchRow]) -> String {
    let mut s = String::from("n,m,kappa_x,kappa_y,sqrt_kappa_xty,cgs_residual,mgs_residual\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{:e},{:e},{:e},{:e},{:e}\n",
            r.n, r.m, r.kappa_x, r.kappa_y, r.sqrt_kappa_xty, r.cgs, r.mgs
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lauchli_shape() {
        let y = lauchli_columns(4, 2, 0.5);
        assert_eq!(y.col(0), &[1.0, 0.5, 0.0, 0.0]);
        assert_eq!(y.col(1), &[1.0, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn lauchli_condition_closed_form() {
        // YᵀY = 11ᵀ + μ²I has eigenvalues m + μ² and μ²
        for n in DEFAULT_SIZES {
            let r = bench_row(n, LAUCHLI_MU).unwrap();
            let want = ((r.m as f64 + LAUCHLI_MU * LAUCHLI_MU).sqrt()) / LAUCHLI_MU;
            assert!((r.kappa_y / want - 1.0).abs() < 1e-8, "n={n}");
        }
    }

    #[test]
    fn hilbert_4x2_condition() {
        // [[1, 1/2], [1/2, 1/3], [1/3, 1/4], [1/4, 1/5]]; numpy.linalg.cond gives 13.268667285538132
        let r = bench_row(4, LAUCHLI_MU).unwrap();
        assert!((r.kappa_x / 13.268667285538132 - 1.0).abs() < 1e-12, "{}", r.kappa_x);
    }
}
