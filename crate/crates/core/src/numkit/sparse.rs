use crate::error::{Error, Result};

use super::dense::DenseMatrix;
use super::par::{for_each_row, Exec};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != rows + 1 {
            return Err(Error::invalid(format!(
                "row pointer has {} entries, expected {}",
                indptr.len(),
                rows + 1
            )));
        }
        if indices.len() != values.len() || indptr[rows] != values.len() || indptr[0] != 0 {
            return Err(Error::invalid("row pointer does not cover value array"));
        }
        for i in 0..rows {
            let (lo, hi) = (indptr[i], indptr[i + 1]);
            if lo > hi {
                return Err(Error::invalid(format!("row pointer decreases at row {i}")));
            }
            let row = &indices[lo..hi];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!(
                    "column indices in row {i} are not strictly increasing"
                )));
            }
            if row.last().is_some_and(|&c| c >= cols) {
                return Err(Error::invalid(format!("column index out of range in row {i}")));
            }
        }
        let mut m = Self {
            rows,
            cols,
            indptr,
            indices,
            values,
            symmetric: false,
        };
        m.symmetric = m.check_symmetric();
        Ok(m)
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        if let Some(&(r, c, _)) = t.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(Error::invalid(format!(
                "triplet ({r}, {c}) outside {rows}x{cols}"
            )));
        }
        t.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        Self::new(rows, cols, indptr, indices, values)
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut indptr = Vec::with_capacity(m.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self::new(m.rows(), m.cols(), indptr, indices, values).expect("valid CSR from dense")
    }

    pub fn identity(n: usize) -> Self {
        Self::new(n, n, (0..=n).collect(), (0..n).collect(), vec![1.0; n])
            .expect("identity is valid CSR")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    /// True when the matrix is square and bitwise equal to its transpose.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn check_symmetric(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let t = self.transpose_raw();
        t.indptr == self.indptr && t.indices == self.indices && t.values == self.values
    }

    fn transpose_raw(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let dst = next[c];
                indices[dst] = i;
                values[dst] = v;
                next[c] += 1;
            }
        }
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
            symmetric: self.symmetric,
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        self.transpose_raw()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                out.set(i, c, v);
            }
        }
        out
    }

    /// Sparse-sparse product `self · other`.
    pub fn matmul_sparse(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.cols != other.rows {
            return Err(Error::shape("matmul_sparse", self.shape(), other.shape()));
        }
        let mut acc = vec![0.0; other.cols];
        let mut seen = vec![false; other.cols];
        let mut touched = Vec::new();
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..self.rows {
            let (ks, vs) = self.row(i);
            for (&k, &a) in ks.iter().zip(vs) {
                let (js, bs) = other.row(k);
                for (&j, &b) in js.iter().zip(bs) {
                    if !seen[j] {
                        seen[j] = true;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                if acc[j] != 0.0 {
                    indices.push(j);
                    values.push(acc[j]);
                }
                acc[j] = 0.0;
                seen[j] = false;
            }
            touched.clear();
            indptr.push(indices.len());
        }
        SparseMatrix::new(self.rows, other.cols, indptr, indices, values)
    }
}

/// `s · x`, or `sᵀ · x` when `transpose_s` is set.
pub fn spmm(s: &SparseMatrix, x: &DenseMatrix, transpose_s: bool) -> Result<DenseMatrix> {
    spmm_with(s, x, transpose_s, Exec::default())
}

pub fn spmm_with(
    s: &SparseMatrix,
    x: &DenseMatrix,
    transpose_s: bool,
    exec: Exec,
) -> Result<DenseMatrix> {
    let inner = if transpose_s { s.rows } else { s.cols };
    if inner != x.rows() {
        let shape = if transpose_s {
            (s.cols, s.rows)
        } else {
            s.shape()
        };
        return Err(Error::shape("spmm", shape, x.shape()));
    }
    let n = x.cols();
    if !transpose_s || s.symmetric {
        let mut out = DenseMatrix::zeros(s.rows, n);
        for_each_row(exec, out.data_mut(), n, |i, out_row| {
            let (ks, vs) = s.row(i);
            for (&k, &v) in ks.iter().zip(vs) {
                for (o, &xk) in out_row.iter_mut().zip(x.row(k)) {
                    *o += v * xk;
                }
            }
        });
        return Ok(out);
    }
    // Scatter in row order; deterministic but not row-parallel.
    let mut out = DenseMatrix::zeros(s.cols, n);
    for i in 0..s.rows {
        let (ks, vs) = s.row(i);
        let x_row = x.row(i);
        for (&k, &v) in ks.iter().zip(vs) {
            for (o, &xi) in out.row_mut(k).iter_mut().zip(x_row) {
                *o += v * xi;
            }
        }
    }
    Ok(out)
}
