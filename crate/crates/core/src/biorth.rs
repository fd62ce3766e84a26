//! Gram–Schmidt biorthogonalization of column pairs.

use crate::error::{check_dim, Result};
use crate::linalg::block::{block_axpy, block_inner, BlockVectors};
use crate::linalg::dense::{axpy, dot, DenseMatrix};
use crate::linalg::InnerProduct;

pub const DEFAULT_DROP_TOL: f64 = 1e-12;

/// Residual above which the optional second pass runs.
pub const REBIORTH_THRESHOLD: f64 = 1e-10;

/// Paired blocks with `⟨p_i, q_j⟩ = δ_ij` under the inner product they were
/// built with.
#[derive(Debug, Clone, PartialEq)]
pub struct BiorthBasis {
    pub p: BlockVectors,
    pub q: BlockVectors,
}

impl BiorthBasis {
    pub fn new(p: BlockVectors, q: BlockVectors) -> Result<Self> {
        check_dim("biorth basis rows", p.dim(), q.dim())?;
        check_dim("biorth basis cols", p.ncols(), q.ncols())?;
        Ok(Self { p, q })
    }

    pub fn empty(dim: usize) -> Self {
        Self { p: BlockVectors::zeros(dim, 0), q: BlockVectors::zeros(dim, 0) }
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }

    pub fn len(&self) -> usize {
        self.p.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.p.ncols() == 0
    }

    pub fn residual(&self, ip: &InnerProduct) -> Result<f64> {
        biorth_residual(&self.p, &self.q, ip)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiorthOutcome {
    pub basis: BiorthBasis,
    pub kept_columns: Vec<usize>,
    pub dropped_columns: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Classical,
    Modified,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiorthOptions {
    pub scheme: Scheme,
    /// Drop a column when `|η| < drop_tol·‖p̃‖·‖q̃‖`.
    pub drop_tol: f64,
    /// Also drop a column when the subtraction removed all but this fraction
    /// of its norm. Zero disables the check.
    pub cancel_tol: f64,
    /// Rerun the subtraction on the output once if its residual exceeds
    /// [`REBIORTH_THRESHOLD`].
    pub second_pass: bool,
}

impl Default for BiorthOptions {
    fn default() -> Self {
        Self { scheme: Scheme::Modified, drop_tol: DEFAULT_DROP_TOL, cancel_tol: 0.0, second_pass: false }
    }
}

/// Modified Gram–Schmidt biorthogonalization, single pass.
pub fn mgs_biorth(x: &BlockVectors, y: &BlockVectors, ip: &InnerProduct, drop_tol: f64) -> Result<BiorthOutcome> {
    biorth_with(x, y, ip, &BiorthOptions { scheme: Scheme::Modified, drop_tol, ..Default::default() })
}

/// Classical Gram–Schmidt biorthogonalization, single pass: coefficients are
/// taken against the original columns.
pub fn cgs_biorth(x: &BlockVectors, y: &BlockVectors, ip: &InnerProduct, drop_tol: f64) -> Result<BiorthOutcome> {
    biorth_with(x, y, ip, &BiorthOptions { scheme: Scheme::Classical, drop_tol, ..Default::default() })
}

pub fn biorth_with(x: &BlockVectors, y: &BlockVectors, ip: &InnerProduct, opts: &BiorthOptions) -> Result<BiorthOutcome> {
    check_dim("biorth rows", x.dim(), y.dim())?;
    check_dim("biorth cols", x.ncols(), y.ncols())?;
    let first = biorth_pass(x, y, ip, opts)?;
    if !opts.second_pass || first.basis.is_empty() {
        return Ok(first);
    }
    if biorth_residual(&first.basis.p, &first.basis.q, ip)? <= REBIORTH_THRESHOLD {
        return Ok(first);
    }
    let second = biorth_pass(&first.basis.p, &first.basis.q, ip, &BiorthOptions { cancel_tol: 0.0, ..*opts })?;
    let kept: Vec<usize> = second.kept_columns.iter().map(|&k| first.kept_columns[k]).collect();
    let mut dropped = first.dropped_columns.clone();
    dropped.extend(second.dropped_columns.iter().map(|&k| first.kept_columns[k]));
    dropped.sort_unstable();
    Ok(BiorthOutcome { basis: second.basis, kept_columns: kept, dropped_columns: dropped })
}

// Column storage plus, for a weighted inner product, the B-images of the
// same columns, updated alongside so B is applied once per input block.
struct Cols {
    v: Vec<Vec<f64>>,
    bv: Option<Vec<Vec<f64>>>,
}

impl Cols {
    fn image(&self, j: usize) -> &[f64] {
        match &self.bv {
            Some(b) => &b[j],
            None => &self.v[j],
        }
    }
}

fn split(x: &BlockVectors, bx: Option<BlockVectors>) -> Cols {
    Cols {
        v: x.columns().map(<[f64]>::to_vec).collect(),
        bv: bx.map(|b| b.columns().map(<[f64]>::to_vec).collect()),
    }
}

fn biorth_pass(x: &BlockVectors, y: &BlockVectors, ip: &InnerProduct, opts: &BiorthOptions) -> Result<BiorthOutcome> {
    let n = x.dim();
    let m = x.ncols();
    let weighted = !ip.is_identity();
    let (bx, by) = if weighted { (Some(ip.apply_weight(x)?), Some(ip.apply_weight(y)?)) } else { (None, None) };
    let xs = split(x, bx);
    let ys = split(y, by);

    let mut p = Cols { v: Vec::new(), bv: weighted.then(Vec::new) };
    let mut q = Cols { v: Vec::new(), bv: weighted.then(Vec::new) };
    let mut kept = Vec::new();
    let mut dropped = Vec::new();

    for l in 0..m {
        let mut xt = xs.v[l].clone();
        let mut yt = ys.v[l].clone();
        let mut bxt = xs.bv.as_ref().map(|b| b[l].clone());
        let mut byt = ys.bv.as_ref().map(|b| b[l].clone());
        let nx0 = dot(&xt, bxt.as_deref().unwrap_or(&xt)).max(0.0).sqrt();
        let ny0 = dot(&yt, byt.as_deref().unwrap_or(&yt)).max(0.0).sqrt();

        for j in 0..p.v.len() {
            let (r, s) = match opts.scheme {
                Scheme::Modified => (
                    dot(&q.v[j], bxt.as_deref().unwrap_or(&xt)),
                    dot(&p.v[j], byt.as_deref().unwrap_or(&yt)),
                ),
                Scheme::Classical => (dot(&q.v[j], xs.image(l)), dot(&p.v[j], ys.image(l))),
            };
            axpy(-r, &p.v[j], &mut xt);
            if let Some(b) = bxt.as_mut() {
                axpy(-r, p.image(j), b);
            }
            axpy(-s, &q.v[j], &mut yt);
            if let Some(b) = byt.as_mut() {
                axpy(-s, q.image(j), b);
            }
        }

        let eta = dot(&xt, byt.as_deref().unwrap_or(&yt));
        let nx = dot(&xt, bxt.as_deref().unwrap_or(&xt)).max(0.0).sqrt();
        let ny = dot(&yt, byt.as_deref().unwrap_or(&yt)).max(0.0).sqrt();
        let cancelled = opts.cancel_tol > 0.0 && (nx < opts.cancel_tol * nx0 || ny < opts.cancel_tol * ny0);
        if nx == 0.0 || ny == 0.0 || !eta.is_finite() || eta.abs() < opts.drop_tol * nx * ny || cancelled {
            dropped.push(l);
            continue;
        }
        let sgn = if eta < 0.0 { -1.0 } else { 1.0 };
        let f = 1.0 / eta.abs().sqrt();
        let scale = |v: &mut Vec<f64>, a: f64| v.iter_mut().for_each(|e| *e *= a);
        scale(&mut xt, sgn * f);
        scale(&mut yt, f);
        p.v.push(xt);
        q.v.push(yt);
        if let (Some(pb), Some(mut b)) = (p.bv.as_mut(), bxt) {
            scale(&mut b, sgn * f);
            pb.push(b);
        }
        if let (Some(qb), Some(mut b)) = (q.bv.as_mut(), byt) {
            scale(&mut b, f);
            qb.push(b);
        }
        kept.push(l);
    }

    let pb = BlockVectors::from_columns(n, &p.v)?;
    let qb = BlockVectors::from_columns(n, &q.v)?;
    Ok(BiorthOutcome { basis: BiorthBasis { p: pb, q: qb }, kept_columns: kept, dropped_columns: dropped })
}

/// Projects `(X, Y)` onto the biorthogonal complement of every basis:
/// `X ← (I − P Qᵀ B) X`, `Y ← (I − Q Pᵀ B) Y`, one basis after another.
pub fn biorth_against(
    bases: &[&BiorthBasis],
    x: &BlockVectors,
    y: &BlockVectors,
    ip: &InnerProduct,
) -> Result<(BlockVectors, BlockVectors)> {
    let mut w = x.clone();
    let mut z = y.clone();
    for b in bases {
        if b.is_empty() {
            continue;
        }
        check_dim("biorth_against basis", b.dim(), w.dim())?;
        let cw = block_inner(ip, &b.q, &w)?;
        block_axpy(&b.p, &cw, &mut w)?;
        let cz = block_inner(ip, &b.p, &z)?;
        block_axpy(&b.q, &cz, &mut z)?;
    }
    Ok((w, z))
}

/// `‖Pᵀ B Q − I‖₂`.
pub fn biorth_residual(p: &BlockVectors, q: &BlockVectors, ip: &InnerProduct) -> Result<f64> {
    check_dim("biorth_residual cols", p.ncols(), q.ncols())?;
    if p.ncols() == 0 {
        return Ok(0.0);
    }
    let g = block_inner(ip, p, q)?;
    let dev = g.sub(&DenseMatrix::identity(p.ncols()))?;
    Ok(dev.spectral_norm())
}

/// `‖Pᵀ B Q‖₂` for blocks that should be mutually biorthogonal.
pub fn cross_gram_norm(p: &BlockVectors, q: &BlockVectors, ip: &InnerProduct) -> Result<f64> {
    if p.ncols() == 0 || q.ncols() == 0 {
        return Ok(0.0);
    }
    Ok(block_inner(ip, p, q)?.spectral_norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn units(n: usize, idx: &[usize]) -> BlockVectors {
        BlockVectors::unit_columns(n, idx)
    }

    #[test]
    fn already_biorthonormal() {
        let e = units(3, &[0, 1]);
        let out = mgs_biorth(&e, &e, &InnerProduct::identity(), DEFAULT_DROP_TOL).unwrap();
        assert_eq!(out.basis.p, e);
        assert_eq!(out.basis.q, e);
        assert!(out.dropped_columns.is_empty());
        let c = cgs_biorth(&e, &e, &InnerProduct::identity(), DEFAULT_DROP_TOL).unwrap();
        assert_eq!(c, out);
    }

    #[test]
    fn single_column_scaling() {
        let x = BlockVectors::from_col_major(2, 1, vec![1.0, 0.0]).unwrap();
        let y = BlockVectors::from_col_major(2, 1, vec![2.0, 0.0]).unwrap();
        let out = mgs_biorth(&x, &y, &InnerProduct::identity(), DEFAULT_DROP_TOL).unwrap();
        let s2 = 2f64.sqrt();
        assert!((out.basis.p.col(0)[0] - 1.0 / s2).abs() < 1e-15);
        assert!((out.basis.q.col(0)[0] - s2).abs() < 1e-15);
        assert!((dot(out.basis.p.col(0), out.basis.q.col(0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_eta_flips_p() {
        let x = BlockVectors::from_col_major(2, 1, vec![1.0, 0.0]).unwrap();
        let y = BlockVectors::from_col_major(2, 1, vec![-4.0, 0.0]).unwrap();
        let out = mgs_biorth(&x, &y, &InnerProduct::identity(), DEFAULT_DROP_TOL).unwrap();
        assert_eq!(out.basis.p.col(0), &[-0.5, 0.0]);
        assert_eq!(out.basis.q.col(0), &[-2.0, 0.0]);
    }

    #[test]
    fn dependent_column_dropped() {
        let e = units(2, &[0, 0]);
        let out = mgs_biorth(&e, &e, &InnerProduct::identity(), DEFAULT_DROP_TOL).unwrap();
        assert_eq!(out.kept_columns, vec![0]);
        assert_eq!(out.dropped_columns, vec![1]);
        let z = BlockVectors::zeros(3, 2);
        let out = mgs_biorth(&z, &z, &InnerProduct::identity(), DEFAULT_DROP_TOL).unwrap();
        assert!(out.basis.is_empty());
        assert_eq!(out.dropped_columns, vec![0, 1]);
    }

    #[test]
    fn orthogonal_pair_dropped() {
        let x = units(2, &[0]);
        let y = units(2, &[1]);
        let out = mgs_biorth(&x, &y, &InnerProduct::identity(), DEFAULT_DROP_TOL).unwrap();
        assert_eq!(out.dropped_columns, vec![0]);
    }

    #[test]
    fn against_cases() {
        let ip = InnerProduct::identity();
        let x = BlockVectors::from_fn(4, 2, |i, j| (i + 2 * j) as f64);
        let (w, z) = biorth_against(&[], &x, &x, &ip).unwrap();
        assert_eq!((w, z), (x.clone(), x.clone()));

        let e1 = units(3, &[0]);
        let b = BiorthBasis::new(e1.clone(), e1.clone()).unwrap();
        let (w, z) = biorth_against(&[&b], &e1, &e1, &ip).unwrap();
        assert_eq!(w.max_abs(), 0.0);
        assert_eq!(z.max_abs(), 0.0);

        let e2 = units(3, &[1, 2]);
        let (w, _) = biorth_against(&[&b], &e2, &e2, &ip).unwrap();
        assert!(w.sub(&e2).unwrap().max_abs() <= 1e-14);
    }

    #[test]
    fn residual_cases() {
        let ip = InnerProduct::identity();
        let e = units(3, &[0, 1]);
        assert!(biorth_residual(&e, &e, &ip).unwrap() < 1e-15);
        let d = units(3, &[0, 0]);
        assert!((biorth_residual(&d, &d, &ip).unwrap() - 1.0).abs() < 1e-14);
    }
}
