//! Randomized checks of the kernel contracts. Oracles are nalgebra or
//! naive loops.

use std::sync::Arc;

use bosp_core::biorth::{biorth_against, biorth_residual, mgs_biorth, BiorthBasis};
use bosp_core::linalg::{
    block_apply, block_inner, cg_solve, BlockVectors, CsrMatrix, DenseMatrix, DiagonalOperator, InnerProduct,
    LinearOperator,
};
use bosp_core::projected::{dense_lrep_oracle, solve_small_lrep, ProjectedLrep};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_block(n: usize, k: usize, r: &mut ChaCha8Rng) -> BlockVectors {
    BlockVectors::from_fn(n, k, |_, _| r.random_range(-1.0..1.0))
}

/// `GᵀG + shift·I`, symmetric by construction.
fn random_spd(n: usize, shift: f64, r: &mut ChaCha8Rng) -> DenseMatrix {
    let g = DenseMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
    let a = g.tr_matmul(&g).unwrap();
    DenseMatrix::symmetric_from_lower(n, |i, j| a[(i, j)] + if i == j { shift } else { 0.0 })
}

fn na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(a.rows(), a.cols(), a.as_slice())
}

fn na_block(b: &BlockVectors) -> DMatrix<f64> {
    DMatrix::from_column_slice(b.dim(), b.ncols(), b.as_slice())
}

fn positive_weights(n: usize, r: &mut ChaCha8Rng) -> Arc<dyn LinearOperator> {
    Arc::new(DiagonalOperator::new((0..n).map(|_| r.random_range(0.5..3.0)).collect()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn t_matrix_row_sums(n in 3usize..60, minus in any::<bool>()) {
        let s = if minus { -1.0 } else { 0.0 };
        let t = CsrMatrix::tridiag_t(n, s);
        let mut y = vec![0.0; n];
        t.spmv(&vec![1.0; n], &mut y);
        for (i, v) in y.iter().enumerate() {
            let want = if i == 0 || i + 1 == n { 1.0 + s } else { 0.0 };
            prop_assert_eq!(*v, want);
        }
    }

    #[test]
    fn block_inner_matches_transpose_product(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_block(50, 5, &mut r);
        let y = random_block(50, 5, &mut r);
        let g = block_inner(&InnerProduct::identity(), &x, &y).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want: f64 = x.col(i).iter().zip(y.col(j)).map(|(a, b)| a * b).sum();
                let scale: f64 = x.col(i).iter().zip(y.col(j)).map(|(a, b)| (a * b).abs()).sum();
                prop_assert!((g[(i, j)] - want).abs() <= 1e-14 * scale);
            }
        }
    }

    #[test]
    fn weighted_inner_is_symmetric_and_positive(n in 2usize..40, seed in any::<u64>()) {
        let mut r = rng(seed);
        let ip = InnerProduct::weighted(positive_weights(n, &mut r));
        let x = random_block(n, 3, &mut r);
        let g = block_inner(&ip, &x, &x).unwrap();
        prop_assert!(g.max_asymmetry() <= 1e-14 * g.max_abs());
        for j in 0..3 {
            prop_assert!(g[(j, j)] > 0.0);
            let d = ip.dot(x.col(j), x.col(j)).unwrap();
            prop_assert!((d - g[(j, j)]).abs() <= 1e-13 * d);
        }
    }

    #[test]
    fn operators_are_linear_and_symmetric(n in 3usize..40, seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut r = rng(seed);
        let ops: Vec<Box<dyn LinearOperator>> = vec![
            Box::new(CsrMatrix::tridiag_t(n, -1.0)),
            Box::new(random_spd(n, 0.1, &mut r)),
            Box::new(DiagonalOperator::new((0..n).map(|i| i as f64 + 0.5).collect())),
        ];
        let x = random_block(n, 2, &mut r);
        let y = random_block(n, 2, &mut r);
        let comb = x.lin_comb(a, &y, b).unwrap();
        for op in &ops {
            let ax = block_apply(op.as_ref(), &x).unwrap();
            let ay = block_apply(op.as_ref(), &y).unwrap();
            let lhs = block_apply(op.as_ref(), &comb).unwrap();
            let rhs = ax.lin_comb(a, &ay, b).unwrap();
            let scale = ax.max_abs().max(ay.max_abs()) * (a.abs() + b.abs() + 1.0);
            prop_assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-13 * scale);
            // ⟨A x, y⟩ = ⟨x, A y⟩
            let g1 = block_inner(&InnerProduct::identity(), &ax, &y).unwrap();
            let g2 = block_inner(&InnerProduct::identity(), &x, &ay).unwrap();
            prop_assert!(g1.sub(&g2).unwrap().max_abs() <= 1e-12 * g1.max_abs().max(1.0));
        }
    }

    #[test]
    fn cg_matches_direct_solve(n in 2usize..40, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_spd(n, n as f64 * 0.1, &mut r);
        let b = random_block(n, 2, &mut r);
        let out = cg_solve(&a, &b, &BlockVectors::zeros(n, 2), 1e-12, n).unwrap();
        let direct = na(&a).lu().solve(&na_block(&b)).unwrap();
        for (j, rep) in out.columns.iter().enumerate() {
            prop_assert!(rep.iterations <= n);
            let xj = out.x.col(j);
            let dj = direct.column(j);
            let err: f64 = xj.iter().zip(dj.iter()).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-8 * dj.norm(), "err {err:e}");
        }
    }

    #[test]
    fn cholesky_reconstructs(n in 1usize..40, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_spd(n, 1e-2, &mut r);
        let l = a.cholesky().unwrap();
        for i in 0..n {
            for j in i + 1..n {
                prop_assert_eq!(l[(i, j)], 0.0);
            }
        }
        let llt = l.matmul(&l.transpose()).unwrap();
        prop_assert!(llt.sub(&a).unwrap().max_abs() <= 1e-13 * a.max_abs());
    }

    #[test]
    fn svd_reconstructs(m in 1usize..30, n in 1usize..30, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = DenseMatrix::from_fn(m, n, |_, _| r.random_range(-1.0..1.0));
        let svd = a.jacobi_svd();
        let k = m.min(n);
        prop_assert_eq!(svd.singular_values.len(), k);
        prop_assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let mut us = svd.u.clone();
        for j in 0..k {
            us.col_mut(j).iter_mut().for_each(|v| *v *= svd.singular_values[j]);
        }
        let rec = us.matmul(&svd.v.transpose()).unwrap();
        let norm = svd.singular_values[0].max(f64::MIN_POSITIVE);
        prop_assert!(rec.sub(&a).unwrap().max_abs() <= 1e-13 * norm);
        let id = DenseMatrix::identity(k);
        prop_assert!(svd.u.tr_matmul(&svd.u).unwrap().sub(&id).unwrap().max_abs() <= 1e-13);
        prop_assert!(svd.v.tr_matmul(&svd.v).unwrap().sub(&id).unwrap().max_abs() <= 1e-13);
        let oracle = na(&a).singular_values();
        let mut o: Vec<f64> = oracle.iter().copied().collect();
        o.sort_by(|a, b| b.total_cmp(a));
        for (s, t) in svd.singular_values.iter().zip(&o) {
            prop_assert!((s - t).abs() <= 1e-13 * norm);
        }
    }

    #[test]
    fn mgs_is_idempotent(n in 6usize..40, k in 1usize..6, seed in any::<u64>(), weighted in any::<bool>()) {
        let mut r = rng(seed);
        let ip = if weighted { InnerProduct::weighted(positive_weights(n, &mut r)) } else { InnerProduct::identity() };
        let x = random_block(n, k, &mut r);
        let y = x.lin_comb(1.0, &random_block(n, k, &mut r), 0.3).unwrap();
        let first = mgs_biorth(&x, &y, &ip, 1e-12).unwrap();
        prop_assume!(first.dropped_columns.is_empty());
        let again = mgs_biorth(&first.basis.p, &first.basis.q, &ip, 1e-12).unwrap();
        let np = first.basis.p.max_abs();
        prop_assert!(again.basis.p.sub(&first.basis.p).unwrap().max_abs() <= 1e-12 * np.max(1.0));
        let nq = first.basis.q.max_abs();
        prop_assert!(again.basis.q.sub(&first.basis.q).unwrap().max_abs() <= 1e-12 * nq.max(1.0));
    }

    #[test]
    fn mgs_preserves_spans(n in 6usize..40, k in 1usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_block(n, k, &mut r);
        let y = x.lin_comb(1.0, &random_block(n, k, &mut r), 0.5).unwrap();
        let out = mgs_biorth(&x, &y, &InnerProduct::identity(), 1e-12).unwrap();
        prop_assume!(out.dropped_columns.is_empty());
        prop_assert!(biorth_residual(&out.basis.p, &out.basis.q, &InnerProduct::identity()).unwrap() <= 1e-10);
        for (orig, basis) in [(&x, &out.basis.p), (&y, &out.basis.q)] {
            let qr = na_block(basis).qr();
            let q = qr.q();
            let o = na_block(orig);
            let resid = &o - &q * (q.transpose() * &o);
            for j in 0..k {
                prop_assert!(resid.column(j).norm() <= 1e-10 * o.column(j).norm());
            }
        }
    }

    #[test]
    fn biorth_against_removes_components(n in 10usize..50, seed in any::<u64>()) {
        let mut r = rng(seed);
        let ip = InnerProduct::weighted(positive_weights(n, &mut r));
        let bx = random_block(n, 3, &mut r);
        let by = bx.lin_comb(1.0, &random_block(n, 3, &mut r), 0.2).unwrap();
        let basis = mgs_biorth(&bx, &by, &ip, 1e-12).unwrap().basis;
        prop_assume!(basis.len() == 3);
        let w = random_block(n, 4, &mut r);
        let z = random_block(n, 4, &mut r);
        let (w2, z2) = biorth_against(&[&basis, &BiorthBasis::empty(n)], &w, &z, &ip).unwrap();
        let qw = block_inner(&ip, &basis.q, &w2).unwrap();
        let pz = block_inner(&ip, &basis.p, &z2).unwrap();
        let bound = |a: &BlockVectors, b: &BlockVectors| 1e-12 * a.frobenius_norm() * b.frobenius_norm();
        prop_assert!(qw.max_abs() <= bound(&w2, &basis.q).max(1e-12 * w.frobenius_norm() * basis.q.frobenius_norm()));
        prop_assert!(pz.max_abs() <= bound(&z2, &basis.p).max(1e-12 * z.frobenius_norm() * basis.p.frobenius_norm()));
    }

    #[test]
    fn small_solver_identities(d in 1usize..30, seed in any::<u64>()) {
        let mut r = rng(seed);
        let k = random_spd(d, 1e-1, &mut r);
        let m = random_spd(d, 1e-1, &mut r);
        let p = ProjectedLrep::new(&k, &m).unwrap();
        let sol = solve_small_lrep(&p, d).unwrap();
        prop_assert!(sol.lambdas.iter().all(|&l| l > 0.0));
        prop_assert!(sol.lambdas.windows(2).all(|w| w[0] <= w[1]));
        let rep = sol.identities(&p);
        prop_assert!(rep.biorth <= 1e-10, "biorth {:e}", rep.biorth);
        prop_assert!(rep.k_residual <= 1e-9 && rep.m_residual <= 1e-9);
        let oracle = dense_lrep_oracle(&p).unwrap();
        for (a, b) in sol.lambdas.iter().zip(&oracle.lambdas) {
            prop_assert!((a - b).abs() <= 1e-10 * b, "{a} vs {b}");
        }
    }
}
