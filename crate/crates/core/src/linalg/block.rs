//! Column blocks of vectors and the level-3 style kernels on them.

use rayon::prelude::*;

use super::dense::{axpy, dot, norm2, DenseMatrix};
use super::inner::InnerProduct;
use super::operator::LinearOperator;
use crate::error::{check_dim, Result};

/// An `n × m` block of column vectors, column-major so every column is a
/// contiguous slice.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVectors {
    dim: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl BlockVectors {
    pub fn zeros(dim: usize, ncols: usize) -> Self {
        Self { dim, ncols, data: vec![0.0; dim * ncols] }
    }

    pub fn from_col_major(dim: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("BlockVectors::from_col_major", dim * ncols, data.len())?;
        Ok(Self { dim, ncols, data })
    }

    pub fn from_columns(dim: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * columns.len());
        for c in columns {
            check_dim("BlockVectors::from_columns", dim, c.len())?;
            data.extend_from_slice(c);
        }
        Ok(Self { dim, ncols: columns.len(), data })
    }

    pub fn from_fn(dim: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dim * ncols);
        for j in 0..ncols {
            for i in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, ncols, data }
    }

    /// Columns `e_j` of the `dim`-dimensional identity for `j` in `cols`.
    pub fn unit_columns(dim: usize, cols: &[usize]) -> Self {
        let mut b = Self::zeros(dim, cols.len());
        for (k, &j) in cols.iter().enumerate() {
            b.col_mut(k)[j] = 1.0;
        }
        b
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn is_empty(&self) -> bool {
        self.ncols == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.ncols).map(move |j| self.col(j))
    }

    pub(crate) fn par_columns_mut(&mut self) -> rayon::slice::ChunksExactMut<'_, f64> {
        let dim = self.dim.max(1);
        self.data.par_chunks_exact_mut(dim)
    }

    pub fn select_columns(&self, idx: &[usize]) -> BlockVectors {
        let mut data = Vec::with_capacity(self.dim * idx.len());
        for &j in idx {
            data.extend_from_slice(self.col(j));
        }
        BlockVectors { dim: self.dim, ncols: idx.len(), data }
    }

    pub fn column_range(&self, range: std::ops::Range<usize>) -> BlockVectors {
        let data = self.data[range.start * self.dim..range.end * self.dim].to_vec();
        BlockVectors { dim: self.dim, ncols: range.len(), data }
    }

    /// Horizontal concatenation `[a, b, ...]`.
    pub fn hcat(blocks: &[&BlockVectors]) -> Result<BlockVectors> {
        let dim = blocks.first().map_or(0, |b| b.dim);
        let mut data = Vec::with_capacity(dim * blocks.iter().map(|b| b.ncols).sum::<usize>());
        let mut ncols = 0;
        for b in blocks {
            if b.ncols > 0 {
                check_dim("BlockVectors::hcat", dim, b.dim)?;
            }
            data.extend_from_slice(&b.data);
            ncols += b.ncols;
        }
        Ok(BlockVectors { dim, ncols, data })
    }

    pub fn push_columns(&mut self, other: &BlockVectors) -> Result<()> {
        if other.ncols == 0 {
            return Ok(());
        }
        if self.ncols == 0 {
            self.dim = other.dim;
        }
        check_dim("BlockVectors::push_columns", self.dim, other.dim)?;
        self.data.extend_from_slice(&other.data);
        self.ncols += other.ncols;
        Ok(())
    }

    pub fn scale_columns(&mut self, factors: &[f64]) {
        for (j, &f) in factors.iter().enumerate().take(self.ncols) {
            self.col_mut(j).iter_mut().for_each(|v| *v *= f);
        }
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.columns().map(norm2).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `self - other`.
    pub fn sub(&self, other: &BlockVectors) -> Result<BlockVectors> {
        check_dim("BlockVectors::sub", self.data.len(), other.data.len())?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(BlockVectors { dim: self.dim, ncols: self.ncols, data })
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &BlockVectors, b: f64) -> Result<BlockVectors> {
        check_dim("BlockVectors::lin_comb", self.data.len(), other.data.len())?;
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        Ok(BlockVectors { dim: self.dim, ncols: self.ncols, data })
    }

    /// Copies into a dense matrix of the same shape.
    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_col_major(self.dim, self.ncols, self.data.clone()).expect("shape")
    }

    pub fn from_dense(m: &DenseMatrix) -> BlockVectors {
        BlockVectors { dim: m.rows(), ncols: m.cols(), data: m.as_slice().to_vec() }
    }
}

/// Applies `op` to every column of `x`.
pub fn block_apply(op: &dyn LinearOperator, x: &BlockVectors) -> Result<BlockVectors> {
    check_dim("block_apply", op.dim(), x.dim())?;
    let mut y = BlockVectors::zeros(x.dim(), x.ncols());
    if x.ncols() == 0 {
        return Ok(y);
    }
    op.apply(x, &mut y);
    Ok(y)
}

/// Gram block `G[i][j] = ⟨x_i, y_j⟩` under `ip`.
pub fn block_inner(ip: &InnerProduct, x: &BlockVectors, y: &BlockVectors) -> Result<DenseMatrix> {
    if x.ncols() > 0 && y.ncols() > 0 {
        check_dim("block_inner", x.dim(), y.dim())?;
    }
    let weighted;
    let yw = match ip.weight() {
        Some(b) if y.ncols() > 0 => {
            weighted = block_apply(b.as_ref(), y)?;
            &weighted
        }
        _ => y,
    };
    Ok(plain_gram(x, yw))
}

/// `xᵀ y` without any weight.
pub(crate) fn plain_gram(x: &BlockVectors, y: &BlockVectors) -> DenseMatrix {
    let (m, k) = (x.ncols(), y.ncols());
    let mut out = DenseMatrix::zeros(m, k);
    if m == 0 || k == 0 {
        return out;
    }
    let cols: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|j| {
            let yj = y.col(j);
            (0..m).map(|i| dot(x.col(i), yj)).collect()
        })
        .collect();
    for (j, c) in cols.into_iter().enumerate() {
        out.col_mut(j).copy_from_slice(&c);
    }
    out
}

/// `X · C`.
pub fn block_product(x: &BlockVectors, c: &DenseMatrix) -> Result<BlockVectors> {
    check_dim("block_product", x.ncols(), c.rows())?;
    let mut out = BlockVectors::zeros(x.dim(), c.cols());
    if x.dim() == 0 {
        return Ok(out);
    }
    out.par_columns_mut().enumerate().for_each(|(j, oc)| {
        for l in 0..x.ncols() {
            let s = c[(l, j)];
            if s != 0.0 {
                axpy(s, x.col(l), oc);
            }
        }
    });
    Ok(out)
}

/// `Y ← Y − X · C`.
pub fn block_axpy(x: &BlockVectors, c: &DenseMatrix, y: &mut BlockVectors) -> Result<()> {
    check_dim("block_axpy(inner)", x.ncols(), c.rows())?;
    check_dim("block_axpy(cols)", y.ncols(), c.cols())?;
    if c.cols() > 0 && x.ncols() > 0 {
        check_dim("block_axpy(dim)", y.dim(), x.dim())?;
    }
    if y.dim() == 0 {
        return Ok(());
    }
    y.par_columns_mut().enumerate().for_each(|(j, yc)| {
        for l in 0..x.ncols() {
            let s = c[(l, j)];
            if s != 0.0 {
                axpy(-s, x.col(l), yc);
            }
        }
    });
    Ok(())
}
