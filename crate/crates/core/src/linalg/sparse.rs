use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Compressed sparse row storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != rows + 1 || row_offsets[0] != 0 {
            return Err(Error::InvalidArgument("row_offsets must have rows+1 entries starting at 0".into()));
        }
        if *row_offsets.last().unwrap() != values.len() || col_indices.len() != values.len() {
            return Err(Error::InvalidArgument("row_offsets end does not match stored values".into()));
        }
        for i in 0..rows {
            let (a, b) = (row_offsets[i], row_offsets[i + 1]);
            if a > b {
                return Err(Error::InvalidArgument(format!("row_offsets decreasing at row {i}")));
            }
            let row = &col_indices[a..b];
            if row.iter().any(|&c| c >= cols) {
                return Err(Error::InvalidArgument(format!("column index out of range in row {i}")));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!("column indices not strictly increasing in row {i}")));
            }
        }
        Ok(Self { rows, cols, row_offsets, col_indices, values })
    }

    /// Builds from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut t: Vec<(usize, usize, f64)> = triplets.to_vec();
        if let Some(&(i, j, _)) = t.iter().find(|&&(i, j, _)| i >= rows || j >= cols) {
            return Err(Error::InvalidArgument(format!("triplet ({i}, {j}) outside {rows}x{cols}")));
        }
        t.sort_by_key(|a| (a.0, a.1));
        let mut row_offsets = vec![0usize; rows + 1];
        let mut col_indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            col_indices.push(j);
            values.push(v);
            row_offsets[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self::new(rows, cols, row_offsets, col_indices, values)
    }

    /// Tridiagonal `2/−1` matrix of order `n` with `s` in the two corners
    /// `(0, n−1)` and `(n−1, 0)`. `s = −1` gives the periodic Laplacian.
    pub fn tridiag_t(n: usize, s: f64) -> Self {
        let mut t = Vec::with_capacity(3 * n + 2);
        for i in 0..n {
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        if n > 2 && s != 0.0 {
            t.push((0, n - 1, s));
            t.push((n - 1, 0, s));
        }
        Self::from_triplets(n, n, &t).expect("tridiagonal pattern is valid")
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row_offsets[i], self.row_offsets[i + 1]);
        match self.col_indices[a..b].binary_search(&j) {
            Ok(k) => self.values[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.rows) {
            let (a, b) = (self.row_offsets[i], self.row_offsets[i + 1]);
            let mut acc = 0.0;
            for k in a..b {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yi = acc;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                d[(i, self.col_indices[k])] = self.values[k];
            }
        }
        d
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| {
                (self.row_offsets[i]..self.row_offsets[i + 1])
                    .all(|k| self.get(self.col_indices[k], i) == self.values[k])
            })
    }

    /// Iterates stored entries as (row, col, value).
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            (self.row_offsets[i]..self.row_offsets[i + 1]).map(move |k| (i, self.col_indices[k], self.values[k]))
        })
    }
}

/// 7-point Dirichlet Laplacian on an `m³` interior grid, unscaled
/// (diagonal 6, neighbours −1).
pub fn laplacian_3d(m: usize) -> CsrMatrix {
    let n = m * m * m;
    let idx = |i: usize, j: usize, k: usize| i + m * (j + m * k);
    let mut t = Vec::with_capacity(7 * n);
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                let p = idx(i, j, k);
                t.push((p, p, 6.0));
                if i > 0 {
                    t.push((p, idx(i - 1, j, k), -1.0));
                }
                if i + 1 < m {
                    t.push((p, idx(i + 1, j, k), -1.0));
                }
                if j > 0 {
                    t.push((p, idx(i, j - 1, k), -1.0));
                }
                if j + 1 < m {
                    t.push((p, idx(i, j + 1, k), -1.0));
                }
                if k > 0 {
                    t.push((p, idx(i, j, k - 1), -1.0));
                }
                if k + 1 < m {
                    t.push((p, idx(i, j, k + 1), -1.0));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &t).expect("stencil pattern is valid")
}
