//! Accuracy, alignment angles and per-layer criteria recorded during
//! training.

use serde::Serialize;

use crate::dfa::FeedbackMats;
use crate::error::{Error, Result};
use crate::gcn::{ForwardCache, GcnParams, Grads};
use crate::numkit::{cosine, matmul_tn, DenseMatrix};

/// Fraction of `idx` where `pred` matches `truth`.
pub fn accuracy(pred: &[usize], truth: &[usize], idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::invalid("accuracy over an empty index set"));
    }
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "accuracy: {} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut hits = 0usize;
    for &i in idx {
        if i >= pred.len() {
            return Err(Error::invalid(format!("accuracy: index {i} outside 0..{}", pred.len())));
        }
        hits += usize::from(pred[i] == truth[i]);
    }
    Ok(hits as f64 / idx.len() as f64)
}

/// Angle in degrees. A zero-norm operand gives 90° with `degenerate` set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Angle {
    pub degrees: f64,
    pub degenerate: bool,
}

impl Angle {
    pub fn between(a: &DenseMatrix, b: &DenseMatrix) -> Result<Angle> {
        Ok(match cosine(a, b)? {
            Some(c) => Angle {
                degrees: c.acos().to_degrees(),
                degenerate: false,
            },
            None => Angle {
                degrees: 90.0,
                degenerate: true,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerCriteria {
    pub p: f64,
    pub q: f64,
    pub degenerate: bool,
}

/// Alignment measurements for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Weight-feedback angles for `W⁽¹⁾ … W⁽ᴸ⁻¹⁾`.
    pub weight: Vec<Angle>,
    /// DFA vs BP weight-gradient angles for every layer.
    pub gradient: Vec<Angle>,
    /// DFA vs BP angles of the update signal `δX⁽ˡ⁾` for each hidden layer.
    pub direction: Vec<Angle>,
    pub criteria: Vec<LayerCriteria>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub alignment: Option<Alignment>,
}

/// Angles between each weight matrix and the product of feedback matrices
/// it would align with: `B⁽ᴸ⁻¹⁾ᵀ` for the output layer and `B⁽ˡ⁾ᵀB⁽ˡ⁺¹⁾`
/// for interior layers. `W⁽⁰⁾` has no target and is skipped.
pub fn weight_alignment_angles(params: &GcnParams, b: &FeedbackMats) -> Result<Vec<Angle>> {
    let layers = params.num_layers();
    if layers < 2 {
        return Err(Error::invalid("weight alignment needs at least two layers"));
    }
    if b.len() != layers - 1 {
        return Err(Error::invalid(format!(
            "{layers} layers need {} feedback matrices, got {}",
            layers - 1,
            b.len()
        )));
    }
    (1..layers)
        .map(|l| {
            let target = if l == layers - 1 {
                b.get(l).transpose()
            } else {
                matmul_tn(b.get(l), b.get(l + 1))?
            };
            Angle::between(&params.weights[l], &target)
        })
        .collect()
}

fn pairwise(a: &[DenseMatrix], b: &[DenseMatrix]) -> Result<Vec<Angle>> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("comparing {} layers with {}", a.len(), b.len())));
    }
    a.iter().zip(b).map(|(x, y)| Angle::between(x, y)).collect()
}

/// Per-layer angle between DFA and BP weight gradients.
pub fn gradient_alignment_angles(dfa: &Grads, bp: &Grads) -> Result<Vec<Angle>> {
    pairwise(&dfa.weights, &bp.weights)
}

/// Per-hidden-layer angle between DFA and BP update signals `δX⁽ˡ⁾`.
pub fn direction_alignment_angles(dfa: &Grads, bp: &Grads) -> Result<Vec<Angle>> {
    pairwise(&dfa.directions, &bp.directions)
}

/// `P = ⟨δX, X⟩/‖δX‖` and `Q = ⟨δX, C⟩/‖δX‖` for each hidden layer, where
/// `C` is the exact gradient with respect to `X⁽ˡ⁾`.
pub fn layer_criteria(
    cache: &ForwardCache,
    delta_x: &[DenseMatrix],
    exact: &[DenseMatrix],
) -> Result<Vec<LayerCriteria>> {
    let hidden = cache.num_layers() - 1;
    if delta_x.len() != hidden || exact.len() != hidden {
        return Err(Error::invalid(format!(
            "layer_criteria: {hidden} hidden layers, {} directions, {} exact",
            delta_x.len(),
            exact.len()
        )));
    }
    (0..hidden)
        .map(|k| {
            let d = &delta_x[k];
            let x = cache.hidden(k + 1);
            let norm = d.frobenius_norm();
            if norm == 0.0 {
                d.dot(x)?;
                d.dot(&exact[k])?;
                return Ok(LayerCriteria {
                    p: 0.0,
                    q: 0.0,
                    degenerate: true,
                });
            }
            Ok(LayerCriteria {
                p: d.dot(x)? / norm,
                q: d.dot(&exact[k])? / norm,
                degenerate: false,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfa::init_feedback;
    use crate::gcn::init_params;
    use crate::numkit::{random_matrix, Rng};

    #[test]
    fn accuracy_examples() {
        let truth = [0, 1, 2, 1];
        assert_eq!(accuracy(&truth, &truth, &[0, 1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0, 0, 0], &truth, &[0, 1, 2, 3]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 2, 0], &truth, &[0, 1, 2, 3]).unwrap(), 0.75);
        assert_eq!(accuracy(&[0, 1, 2, 0], &truth, &[3, 1, 0, 2]).unwrap(), 0.75);
        assert!(accuracy(&truth, &truth, &[]).is_err());
    }

    #[test]
    fn angle_cases() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]);
        assert!(Angle::between(&a, &a).unwrap().degrees.abs() < 1e-6);
        assert!((Angle::between(&a, &a.scale(-1.0)).unwrap().degrees - 180.0).abs() < 1e-6);
        let b = DenseMatrix::from_rows(&[[2.0, -1.0], [1.0, 3.0]]);
        assert!((Angle::between(&a, &b).unwrap().degrees - 90.0).abs() < 1e-12);
        let z = Angle::between(&a, &DenseMatrix::zeros(2, 2)).unwrap();
        assert!(z.degenerate && z.degrees == 90.0);
        let ab = Angle::between(&a, &a.scale(3.5)).unwrap();
        assert!(ab.degrees.abs() < 1e-6);
    }

    #[test]
    fn weight_alignment_targets() {
        let mut rng = Rng::new(4);
        let dims = [20, 64, 64, 7];
        let mut params = init_params(&dims, &mut rng).unwrap();
        let b = init_feedback(&dims, &mut rng).unwrap();
        let random = weight_alignment_angles(&params, &b).unwrap();
        assert_eq!(random.len(), 2);
        assert!((80.0..=100.0).contains(&random[1].degrees), "{:?}", random);
        params.weights[2] = b.get(2).transpose();
        params.weights[1] = matmul_tn(b.get(1), b.get(2)).unwrap().scale(0.3);
        let aligned = weight_alignment_angles(&params, &b).unwrap();
        assert!(aligned.iter().all(|a| a.degrees < 1e-6));
    }

    #[test]
    fn criteria_self_alignment() {
        let mut rng = Rng::new(8);
        let s = crate::numkit::SparseMatrix::identity(5);
        let x = random_matrix(5, 3, 1.0, &mut rng).unwrap();
        let params = init_params(&[3, 4, 2], &mut rng).unwrap();
        let cache = crate::gcn::forward(&params, &s, &x).unwrap();
        let c = random_matrix(5, 4, 1.0, &mut rng).unwrap();
        let crit = layer_criteria(&cache, std::slice::from_ref(&c), std::slice::from_ref(&c)).unwrap();
        assert!((crit[0].q - c.frobenius_norm()).abs() < 1e-12);
        let zero = layer_criteria(&cache, &[DenseMatrix::zeros(5, 4)], &[c]).unwrap();
        assert!(zero[0].degenerate);
    }
}
