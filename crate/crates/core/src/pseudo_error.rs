//! Pseudo errors for unlabeled nodes: residual spreading over the graph,
//! rescaling to the labeled error magnitude, and the confidence mask.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{spmm, DenseMatrix, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadConfig {
    pub alpha: f64,
    pub iterations: usize,
    pub epsilon: f64,
}

impl SpreadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if self.iterations == 0 {
            return Err(Error::Config("spreading needs at least one iteration".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Iterates `Z ← (1−α)E + αSZ` from `Z = E`, calling `observe` after every
/// iteration.
pub fn spread_errors_with(
    e: &DenseMatrix,
    s: &SparseMatrix,
    cfg: &SpreadConfig,
    mut observe: impl FnMut(usize, &DenseMatrix),
) -> Result<DenseMatrix> {
    cfg.validate()?;
    if s.shape() != (e.rows(), e.rows()) {
        return Err(Error::shape("spread_errors", s.shape(), e.shape()));
    }
    let alpha = cfg.alpha;
    let base = e.scale(1.0 - alpha);
    let mut z = e.clone();
    for t in 1..=cfg.iterations {
        let mut next = spmm(s, &z, false)?;
        for (o, &b) in next.data_mut().iter_mut().zip(base.data()) {
            *o = b + alpha * *o;
        }
        z = next;
        observe(t, &z);
    }
    Ok(z)
}

pub fn spread_errors(e: &DenseMatrix, s: &SparseMatrix, cfg: &SpreadConfig) -> Result<DenseMatrix> {
    spread_errors_with(e, s, cfg, |_, _| {})
}

/// Gives every unlabeled row of `z_star` the mean L1 norm of the labeled
/// rows of `e`; labeled rows are copied from `e`. Rows of `z_star` with zero
/// norm stay zero.
pub fn rescale(z_star: &DenseMatrix, e: &DenseMatrix, labeled: &[bool]) -> Result<DenseMatrix> {
    if z_star.shape() != e.shape() {
        return Err(Error::shape("rescale", z_star.shape(), e.shape()));
    }
    if labeled.len() != e.rows() {
        return Err(Error::shape("rescale", e.shape(), (labeled.len(), e.cols())));
    }
    let count = labeled.iter().filter(|&&l| l).count();
    if count == 0 {
        return Err(Error::invalid("rescale: labeled set is empty"));
    }
    let eta = (0..e.rows())
        .filter(|&i| labeled[i])
        .map(|i| e.row_l1_norm(i))
        .sum::<f64>()
        / count as f64;
    let mut out = DenseMatrix::zeros(e.rows(), e.cols());
    for (i, &is_labeled) in labeled.iter().enumerate() {
        if is_labeled {
            out.row_mut(i).copy_from_slice(e.row(i));
            continue;
        }
        let norm = z_star.row_l1_norm(i);
        if norm > 0.0 {
            let k = eta / norm;
            for (o, &z) in out.row_mut(i).iter_mut().zip(z_star.row(i)) {
                *o = k * z;
            }
        }
    }
    Ok(out)
}

/// Keeps node `i` when exactly one class of the corrected prediction `Ỹ − Ê`
/// exceeds `epsilon`.
pub fn compute_mask(pred: &DenseMatrix, e_hat: &DenseMatrix, epsilon: f64) -> Result<Vec<bool>> {
    if pred.shape() != e_hat.shape() {
        return Err(Error::shape("compute_mask", pred.shape(), e_hat.shape()));
    }
    Ok((0..pred.rows())
        .map(|i| {
            pred.row(i)
                .iter()
                .zip(e_hat.row(i))
                .filter(|&(&p, &r)| p - r > epsilon)
                .count()
                == 1
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, normalized_operator};
    use crate::numkit::{random_matrix, Rng};

    fn cfg(alpha: f64, iterations: usize) -> SpreadConfig {
        SpreadConfig {
            alpha,
            iterations,
            epsilon: 0.5,
        }
    }

    /// Solves `(I − αS) Z = (1−α) E` by Gaussian elimination.
    fn closed_form(s: &SparseMatrix, e: &DenseMatrix, alpha: f64) -> DenseMatrix {
        let n = e.rows();
        let sd = s.to_dense();
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n)
                    .map(|j| f64::from(u8::from(i == j)) - alpha * sd.get(i, j))
                    .collect();
                row.extend(e.row(i).iter().map(|v| (1.0 - alpha) * v));
                row
            })
            .collect();
        for k in 0..n {
            let p = (k..n).max_by(|&x, &y| a[x][k].abs().total_cmp(&a[y][k].abs())).unwrap();
            a.swap(k, p);
            for i in 0..n {
                if i != k {
                    let f = a[i][k] / a[k][k];
                    let pivot = a[k].clone();
                    for (x, y) in a[i].iter_mut().zip(pivot) {
                        *x -= f * y;
                    }
                }
            }
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| a[i][n..].iter().map(|v| v / a[i][i]).collect())
            .collect();
        DenseMatrix::from_rows(&rows)
    }

    #[test]
    fn alpha_zero_is_identity() {
        let g = build_graph(3, &[(0, 1), (1, 2)]).unwrap();
        let s = normalized_operator(&g);
        let e = DenseMatrix::from_rows(&[[1.0, -1.0], [0.0, 0.0], [0.5, 0.25]]);
        assert_eq!(spread_errors(&e, &s, &cfg(0.0, 7)).unwrap(), e);
    }

    #[test]
    fn path_matches_linear_solve() {
        let g = build_graph(3, &[(0, 1), (1, 2)]).unwrap();
        let s = normalized_operator(&g);
        let e = DenseMatrix::from_rows(&[[0.3, -0.3], [0.0, 0.0], [-0.8, 0.8]]);
        let z = spread_errors(&e, &s, &cfg(0.5, 200)).unwrap();
        assert!(z.max_abs_diff(&closed_form(&s, &e, 0.5)) < 1e-6);
    }

    #[test]
    fn norm_never_grows() {
        let mut rng = Rng::new(2);
        let g = build_graph(8, &[(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (1, 6)]).unwrap();
        let s = normalized_operator(&g);
        let e = random_matrix(8, 3, 1.0, &mut rng).unwrap();
        let bound = e.spectral_norm();
        spread_errors_with(&e, &s, &cfg(0.9, 100), |_, z| {
            assert!(z.spectral_norm() <= bound * (1.0 + 1e-9));
        })
        .unwrap();
    }

    #[test]
    fn rescale_hand_example() {
        let e = DenseMatrix::from_rows(&[[0.2, -0.2], [0.4, -0.4], [0.0, 0.0], [0.0, 0.0]]);
        let z = DenseMatrix::from_rows(&[[9.0, 9.0], [9.0, 9.0], [1.0, 1.0], [0.0, 0.0]]);
        let out = rescale(&z, &e, &[true, true, false, false]).unwrap();
        assert_eq!(out.row(0), e.row(0));
        assert_eq!(out.row(1), e.row(1));
        assert!((out.get(2, 0) - 0.3).abs() < 1e-15 && (out.get(2, 1) - 0.3).abs() < 1e-15);
        assert_eq!(out.row(3), &[0.0, 0.0]);
        assert!(rescale(&z, &e, &[false; 4]).is_err());
    }

    #[test]
    fn rescale_fixed_point() {
        let e = DenseMatrix::from_rows(&[[0.5, -0.5], [0.0, 0.0]]);
        let z = DenseMatrix::from_rows(&[[0.0, 0.0], [0.25, -0.75]]);
        let out = rescale(&z, &e, &[true, false]).unwrap();
        assert_eq!(out.row(1), z.row(1));
    }

    #[test]
    fn mask_examples() {
        let y = DenseMatrix::from_rows(&[[0.7, 0.2, 0.1]]);
        let e = DenseMatrix::from_rows(&[[-0.3, 0.2, 0.1]]);
        assert_eq!(compute_mask(&y, &e, 0.5).unwrap(), vec![true]);
        let zero = DenseMatrix::zeros(1, 3);
        let two = DenseMatrix::from_rows(&[[0.6, 0.7, 0.1]]);
        assert_eq!(compute_mask(&two, &zero, 0.5).unwrap(), vec![false]);
        let none = DenseMatrix::from_rows(&[[0.4, 0.4]]);
        assert_eq!(compute_mask(&none, &DenseMatrix::zeros(1, 2), 0.5).unwrap(), vec![false]);
    }

    #[test]
    fn config_bounds() {
        assert!(cfg(1.0, 10).validate().is_err());
        assert!(cfg(0.5, 0).validate().is_err());
        assert!(SpreadConfig { epsilon: 1.0, ..cfg(0.5, 1) }.validate().is_err());
        assert!(cfg(0.99, 1).validate().is_ok());
    }
}
