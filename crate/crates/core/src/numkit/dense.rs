use std::fmt;

use crate::error::{Error, Result};

use super::par::{for_each_block, Exec};
use super::rng::Rng;

/// Row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(i)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "dense matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds from nested rows. Panics on ragged input; meant for literals.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip_with(
        &self,
        other: &DenseMatrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<DenseMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::shape(op, self.shape(), other.shape()));
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        self.map(|x| x * s)
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &DenseMatrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::shape("dot", self.shape(), other.shape()));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn row_l1_norm(&self, i: usize) -> f64 {
        self.row(i).iter().map(|x| x.abs()).sum()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest singular value by power iteration on `AᵀA`.
    pub fn spectral_norm(&self) -> f64 {
        if self.data.iter().all(|&x| x == 0.0) {
            return 0.0;
        }
        let gram = matmul_tn(self, self).expect("square gram");
        let n = gram.cols;
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut lambda = 0.0;
        for _ in 0..500 {
            let mut w = vec![0.0; n];
            for (i, wi) in w.iter_mut().enumerate() {
                *wi = gram.row(i).iter().zip(&v).map(|(a, b)| a * b).sum();
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            w.iter_mut().for_each(|x| *x /= norm);
            let converged = (norm - lambda).abs() <= 1e-15 * norm;
            lambda = norm;
            v = w;
            if converged {
                break;
            }
        }
        lambda.sqrt()
    }
}

/// `a · b`.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    matmul_with(a, b, Exec::default())
}

pub fn matmul_with(a: &DenseMatrix, b: &DenseMatrix, exec: Exec) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    Ok(gemm(a, false, b, false, exec))
}

/// `aᵀ · b`.
pub fn matmul_tn(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != b.rows {
        return Err(Error::shape("matmul_tn", a.shape(), b.shape()));
    }
    Ok(gemm(a, true, b, false, Exec::default()))
}

/// `a · bᵀ`.
pub fn matmul_nt(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.cols {
        return Err(Error::shape("matmul_nt", a.shape(), b.shape()));
    }
    Ok(gemm(a, false, b, true, Exec::default()))
}

/// Output rows handed to one `dgemm` call. Each output entry is produced by
/// the same kernel sequence whatever the blocking, so results do not depend
/// on `exec`.
const GEMM_BLOCK_ROWS: usize = 64;

/// `op(a) · op(b)` with shapes already checked; `op` transposes when the
/// flag is set.
fn gemm(a: &DenseMatrix, ta: bool, b: &DenseMatrix, tb: bool, exec: Exec) -> DenseMatrix {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let n = if tb { b.rows } else { b.cols };
    let mut out = DenseMatrix::zeros(m, n);
    if k == 0 {
        return out;
    }
    // Element (i, p) of op(a) sits at i * rsa + p * csa.
    let (rsa, csa) = if ta { (1, a.cols) } else { (a.cols, 1) };
    let (rsb, csb) = if tb { (1, b.cols) } else { (b.cols, 1) };
    for_each_block(exec, &mut out.data, n, GEMM_BLOCK_ROWS, |r0, block| {
        let rows = block.len() / n;
        let a_block = &a.data[r0 * rsa..];
        // SAFETY: the strides above address only entries of `a` and `b`
        // within their bounds for the `rows × k` and `k × n` operands, and
        // `block` holds exactly `rows × n` entries of row-major output.
        unsafe {
            matrixmultiply::dgemm(
                rows,
                k,
                n,
                1.0,
                a_block.as_ptr(),
                rsa as isize,
                csa as isize,
                b.data.as_ptr(),
                rsb as isize,
                csb as isize,
                0.0,
                block.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    });
    out
}

/// Matrix with i.i.d. `N(0, scale²)` entries, filled in row-major order.
pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!(
            "random_matrix needs positive dimensions, got {rows}x{cols}"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!(
            "random_matrix scale must be positive, got {scale}"
        )));
    }
    let data = (0..rows * cols).map(|_| scale * rng.gaussian()).collect();
    DenseMatrix::new(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple_loop(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn identity_times_m() {
        let m = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(matmul(&DenseMatrix::identity(3), &m).unwrap(), m);
    }

    #[test]
    fn hand_product() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let b = DenseMatrix::from_rows(&[[0.0], [1.0]]);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c, DenseMatrix::from_rows(&[[2.0], [4.0]]));
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = Rng::new(11);
        let a = random_matrix(5, 7, 1.0, &mut rng).unwrap();
        let b = random_matrix(7, 3, 1.0, &mut rng).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert!(c.max_abs_diff(&triple_loop(&a, &b)) < 1e-12);
        let tn = matmul_tn(&a.transpose(), &b).unwrap();
        assert!(tn.max_abs_diff(&c) < 1e-12);
        let nt = matmul_nt(&a, &b.transpose()).unwrap();
        assert!(nt.max_abs_diff(&c) < 1e-12);
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let mut rng = Rng::new(5);
        let a = random_matrix(300, 40, 1.0, &mut rng).unwrap();
        let b = random_matrix(40, 17, 1.0, &mut rng).unwrap();
        let s = matmul_with(&a, &b, Exec::Sequential).unwrap();
        let p = matmul_with(&a, &b, Exec::Parallel).unwrap();
        assert_eq!(s.data(), p.data());
    }

    #[test]
    fn rows_do_not_depend_on_blocking() {
        let mut rng = Rng::new(6);
        let a = random_matrix(200, 90, 1.0, &mut rng).unwrap();
        let b = random_matrix(90, 33, 1.0, &mut rng).unwrap();
        let full = matmul(&a, &b).unwrap();
        let rows: Vec<&[f64]> = (37..151).map(|i| a.row(i)).collect();
        let part = matmul(&DenseMatrix::from_rows(&rows), &b).unwrap();
        for (k, i) in (37..151).enumerate() {
            assert_eq!(part.row(k), full.row(i));
        }
    }

    #[test]
    fn dimension_mismatch_names_shapes() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(2, 3);
        let err = matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)"), "{err}");
    }

    #[test]
    fn random_matrix_determinism_and_moments() {
        let a = random_matrix(4, 4, 0.5, &mut Rng::new(1)).unwrap();
        let b = random_matrix(4, 4, 0.5, &mut Rng::new(1)).unwrap();
        assert_eq!(a.data(), b.data());

        let scale = 2.0;
        let m = random_matrix(100, 100, scale, &mut Rng::new(2)).unwrap();
        let n = m.data().len() as f64;
        let mean = m.data().iter().sum::<f64>() / n;
        let std = (m.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        // Five standard errors.
        assert!(mean.abs() < 5.0 * scale / n.sqrt(), "mean {mean}");
        assert!((std - scale).abs() < 0.05 * scale, "std {std}");
    }

    #[test]
    fn feedback_rows_nearly_orthogonal() {
        let b = random_matrix(256, 256, 1.0, &mut Rng::new(8)).unwrap();
        let bbt = matmul_nt(&b, &b).unwrap().scale(1.0 / 256.0);
        let mut max_off: f64 = 0.0;
        for i in 0..256 {
            assert!((bbt.get(i, i) - 1.0).abs() < 0.3);
            for j in 0..256 {
                if i != j {
                    max_off = max_off.max(bbt.get(i, j).abs());
                }
            }
        }
        // Off-diagonals have std 1/16; the max over ~33k pairs sits near 4.3σ.
        assert!(max_off < 0.35, "max off-diagonal {max_off}");
    }

    #[test]
    fn random_matrix_rejects_bad_args() {
        let mut rng = Rng::new(0);
        assert!(random_matrix(0, 3, 1.0, &mut rng).is_err());
        assert!(random_matrix(3, 3, 0.0, &mut rng).is_err());
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = DenseMatrix::from_rows(&[[3.0, 0.0], [0.0, -5.0], [0.0, 0.0]]);
        assert!((m.spectral_norm() - 5.0).abs() < 1e-9);
    }
}
