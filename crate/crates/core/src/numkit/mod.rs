//! Dense and sparse kernels, nonlinearities, and the seeded random source.

mod dense;
mod par;
mod rng;
mod sparse;

pub use dense::{matmul, matmul_nt, matmul_tn, matmul_with, random_matrix, DenseMatrix};
pub use par::{map_indexed, Exec};
pub use rng::Rng;
pub use sparse::{spmm, spmm_with, SparseMatrix};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Relu,
    Sigmoid,
    /// 1 where x > 0, else 0 (including x == 0).
    ReluDerivative,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn elementwise(kind: Elementwise, x: &DenseMatrix) -> DenseMatrix {
    match kind {
        Elementwise::Relu => x.map(|v| v.max(0.0)),
        Elementwise::Sigmoid => x.map(sigmoid),
        Elementwise::ReluDerivative => x.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
    }
}

/// A left operand that is stored densely or in CSR form.
///
/// Bag-of-words inputs are mostly zeros, so the first layer keeps its
/// aggregated input sparse.
#[derive(Debug, Clone, PartialEq)]
pub enum Matrix {
    Dense(DenseMatrix),
    Sparse(SparseMatrix),
}

impl Matrix {
    pub fn rows(&self) -> usize {
        match self {
            Matrix::Dense(m) => m.rows(),
            Matrix::Sparse(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Matrix::Dense(m) => m.cols(),
            Matrix::Sparse(m) => m.cols(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    /// `self · w`.
    pub fn matmul(&self, w: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            Matrix::Dense(m) => matmul(m, w),
            Matrix::Sparse(m) => spmm(m, w, false),
        }
    }

    /// `selfᵀ · g`.
    pub fn transpose_matmul(&self, g: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            Matrix::Dense(m) => matmul_tn(m, g),
            Matrix::Sparse(m) => spmm(m, g, true),
        }
    }

    /// Left-multiplies by a sparse operator: `s · self`.
    pub fn propagate(&self, s: &SparseMatrix) -> Result<Matrix> {
        match self {
            Matrix::Dense(m) => spmm(s, m, false).map(Matrix::Dense),
            Matrix::Sparse(m) => s.matmul_sparse(m).map(Matrix::Sparse),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Matrix::Dense(m) => m.clone(),
            Matrix::Sparse(m) => m.to_dense(),
        }
    }

    /// Picks CSR storage when at most a quarter of the entries are non-zero.
    pub fn auto(m: DenseMatrix) -> Matrix {
        let nnz = m.data().iter().filter(|&&v| v != 0.0).count();
        if nnz * 4 <= m.data().len() {
            Matrix::Sparse(SparseMatrix::from_dense(&m))
        } else {
            Matrix::Dense(m)
        }
    }
}

impl From<DenseMatrix> for Matrix {
    fn from(m: DenseMatrix) -> Self {
        Matrix::Dense(m)
    }
}

/// Cosine of the angle between two matrices under the Frobenius product,
/// or `None` when either has zero norm.
pub fn cosine(a: &DenseMatrix, b: &DenseMatrix) -> Result<Option<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::shape("cosine", a.shape(), b.shape()));
    }
    let (na, nb) = (a.frobenius_norm(), b.frobenius_norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(None);
    }
    Ok(Some((a.dot(b)? / (na * nb)).clamp(-1.0, 1.0)))
}
