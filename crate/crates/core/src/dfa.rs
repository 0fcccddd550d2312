//! Direct feedback alignment for GCNs.
//!
//! The output error is projected straight to every hidden layer through a
//! fixed random matrix `B⁽ˡ⁾` (`c × dims[l]`) after propagating it back
//! through the graph: `δX⁽ˡ⁾ = (Sᵀ)^(L−l) R B⁽ˡ⁾`, with `R` the filtered
//! (pseudo) error.

use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::bp::backward;
use crate::dataset::{Dataset, Split};
use crate::diagnostics::{
    direction_alignment_angles, gradient_alignment_angles, layer_criteria, weight_alignment_angles,
    Alignment,
};
use crate::error::{Error, Result};
use crate::gcn::{validate_dims, ForwardCache, Grads};
use crate::numkit::{
    elementwise, map_indexed, matmul, random_matrix, spmm, DenseMatrix, Elementwise, Exec, Rng,
    SparseMatrix,
};
use crate::pseudo_error::{compute_mask, rescale, spread_errors, SpreadConfig};
use crate::training::{self, Problem, TrainConfig, TrainResult};

/// Fixed feedback matrices `B⁽¹⁾ … B⁽ᴸ⁻¹⁾`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackMats {
    mats: Vec<DenseMatrix>,
}

impl FeedbackMats {
    pub fn new(mats: Vec<DenseMatrix>) -> Self {
        Self { mats }
    }

    /// `B⁽ˡ⁾` for `1 <= l <= len()`.
    pub fn get(&self, l: usize) -> &DenseMatrix {
        &self.mats[l - 1]
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    /// Hash over the exact bit patterns of every entry.
    pub fn checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for m in &self.mats {
            m.shape().hash(&mut h);
            for v in m.data() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Draws each `B⁽ˡ⁾` with i.i.d. `N(0, 1/√c)` entries.
pub fn init_feedback(dims: &[usize], rng: &mut Rng) -> Result<FeedbackMats> {
    validate_dims(dims)?;
    let c = *dims.last().unwrap();
    let scale = 1.0 / (c as f64).sqrt();
    let mats = dims[1..dims.len() - 1]
        .iter()
        .map(|&d| random_matrix(c, d, scale, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeedbackMats { mats })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfaConfig {
    pub train: TrainConfig,
    pub spread: SpreadConfig,
    pub use_error_generator: bool,
    pub use_node_filter: bool,
    #[serde(default)]
    pub modulate_by_activation_derivative: bool,
    /// Computes BP gradients alongside and records alignment every epoch.
    #[serde(default)]
    pub record_alignment: bool,
}

impl DfaConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.spread.validate()?;
        if self.use_node_filter && !self.use_error_generator {
            return Err(Error::Config(
                "the node filter requires the pseudo-error generator".into(),
            ));
        }
        Ok(())
    }
}

/// Zeroes the rows of `e_hat` where `mask` is false.
pub fn filtered_error(e_hat: &DenseMatrix, mask: &[bool]) -> Result<DenseMatrix> {
    if mask.len() != e_hat.rows() {
        return Err(Error::shape("filtered_error", e_hat.shape(), (mask.len(), e_hat.cols())));
    }
    let mut r = e_hat.clone();
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| !m) {
        r.row_mut(i).fill(0.0);
    }
    Ok(r)
}

/// DFA weight gradients. `directions[l − 1]` holds `δX⁽ˡ⁾`.
pub fn dfa_grads(
    cache: &ForwardCache,
    e_hat: &DenseMatrix,
    mask: &[bool],
    b: &FeedbackMats,
    s: &SparseMatrix,
    modulate: bool,
) -> Result<Grads> {
    let layers = cache.num_layers();
    if e_hat.shape() != cache.output().shape() {
        return Err(Error::shape("dfa_grads", cache.output().shape(), e_hat.shape()));
    }
    if b.len() != layers - 1 {
        return Err(Error::invalid(format!(
            "{layers} layers need {} feedback matrices, got {}",
            layers - 1,
            b.len()
        )));
    }
    for l in 1..layers {
        let want = (e_hat.cols(), cache.hidden(l).cols());
        if b.get(l).shape() != want {
            return Err(Error::shape("dfa_grads", want, b.get(l).shape()));
        }
    }
    let n = e_hat.rows();
    if s.shape() != (n, n) {
        return Err(Error::shape("dfa_grads", s.shape(), (n, n)));
    }
    let r = filtered_error(e_hat, mask)?;
    // chain[k] = (Sᵀ)^k R
    let mut chain = vec![r];
    for k in 1..layers {
        let next = spmm(s, &chain[k - 1], true)?;
        chain.push(next);
    }
    let directions = map_indexed(Exec::default(), layers - 1, |k| matmul(&chain[layers - 1 - k], b.get(k + 1)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let weights = map_indexed(Exec::default(), layers, |l| {
        if l == layers - 1 {
            return cache.weight_grad(l, s, &chain[0]);
        }
        let d = &directions[l];
        if modulate {
            let gated = d.hadamard(&elementwise(Elementwise::ReluDerivative, cache.preactivation(l)))?;
            cache.weight_grad(l, s, &gated)
        } else {
            cache.weight_grad(l, s, d)
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Grads { weights, directions })
}

/// Pseudo error `Ê` and node mask for one epoch given the train-masked
/// output error `e`.
pub fn error_signal(
    problem: &Problem,
    config: &DfaConfig,
    prediction: &DenseMatrix,
    e: &DenseMatrix,
) -> Result<(DenseMatrix, Vec<bool>)> {
    if !config.use_error_generator {
        return Ok((e.clone(), problem.train_mask.clone()));
    }
    let z = spread_errors(e, &problem.s, &config.spread)?;
    let e_hat = rescale(&z, e, &problem.train_mask)?;
    let mask = if config.use_node_filter {
        compute_mask(prediction, &e_hat, config.spread.epsilon)?
    } else {
        vec![true; e.rows()]
    };
    Ok((e_hat, mask))
}

pub fn train_dfa(dataset: &Dataset, split: &Split, config: &DfaConfig, rng: &mut Rng) -> Result<TrainResult> {
    let problem = Problem::new(dataset, split)?;
    train_dfa_problem(&problem, config, rng).map(|(result, _)| result)
}

/// Trains on a prepared problem and also returns the feedback matrices used.
pub fn train_dfa_problem(problem: &Problem, config: &DfaConfig, rng: &mut Rng) -> Result<(TrainResult, FeedbackMats)> {
    config.validate()?;
    let params = training::initial_params(problem, &config.train, rng)?;
    let b = init_feedback(params.dims(), rng)?;
    let result = training::run(problem, &config.train, params, |params, cache, e, _| {
        let (e_hat, mask) = error_signal(problem, config, cache.prediction(), e)?;
        let grads = dfa_grads(cache, &e_hat, &mask, &b, &problem.s, config.modulate_by_activation_derivative)?;
        let alignment = if config.record_alignment {
            let r = filtered_error(&e_hat, &mask)?;
            let exact = backward(params, cache, &r, &problem.s)?;
            Some(Alignment {
                weight: weight_alignment_angles(params, &b)?,
                gradient: gradient_alignment_angles(&grads, &exact)?,
                direction: direction_alignment_angles(&grads, &exact)?,
                criteria: layer_criteria(cache, &grads.directions, &exact.directions)?,
            })
        } else {
            None
        };
        Ok((grads, alignment))
    })?;
    Ok((result, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bp::output_error;
    use crate::gcn::{forward, init_params};
    use crate::graph::{build_graph, normalized_operator};

    fn setup(seed: u64) -> (SparseMatrix, DenseMatrix, crate::gcn::GcnParams, FeedbackMats, DenseMatrix) {
        let mut rng = Rng::new(seed);
        let g = build_graph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 3), (1, 4)]).unwrap();
        let s = normalized_operator(&g);
        let x = random_matrix(6, 4, 1.0, &mut rng).unwrap();
        let dims = [4, 5, 5, 3];
        let params = init_params(&dims, &mut rng).unwrap();
        let b = init_feedback(&dims, &mut rng).unwrap();
        let e = random_matrix(6, 3, 0.5, &mut rng).unwrap();
        (s, x, params, b, e)
    }

    #[test]
    fn feedback_shapes_and_determinism() {
        let dims = [1433, 64, 64, 7];
        let b = init_feedback(&dims, &mut Rng::new(1)).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.get(1).shape(), (7, 64));
        assert_eq!(b.get(2).shape(), (7, 64));
        assert_eq!(b, init_feedback(&dims, &mut Rng::new(1)).unwrap());
        assert_ne!(b.checksum(), init_feedback(&dims, &mut Rng::new(2)).unwrap().checksum());
        assert!(init_feedback(&[3], &mut Rng::new(1)).is_err());
    }

    #[test]
    fn output_layer_matches_bp_bitwise() {
        let (s, x, params, b, _) = setup(3);
        let cache = forward(&params, &s, &x).unwrap();
        let y = DenseMatrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let e = output_error(cache.prediction(), &y, &[true; 6]).unwrap();
        let dfa = dfa_grads(&cache, &e, &[true; 6], &b, &s, false).unwrap();
        let bp = backward(&params, &cache, &e, &s).unwrap();
        assert_eq!(dfa.weights[2], bp.weights[2]);
    }

    #[test]
    fn matches_row_deletion_oracle() {
        let (s, x, params, b, e) = setup(5);
        let cache = forward(&params, &s, &x).unwrap();
        let mask = [true, false, true, true, false, true];
        let g = dfa_grads(&cache, &e, &mask, &b, &s, false).unwrap();
        let kept: Vec<usize> = (0..6).filter(|&i| mask[i]).collect();
        let sd = s.to_dense();
        let s2 = matmul(&sd, &sd).unwrap();
        // Keep only the surviving rows of S^k and Ê, then H^T (S_f)^T Ê_f B.
        let oracle = |sk: &DenseMatrix, h: &DenseMatrix, bm: Option<&DenseMatrix>| {
            let mut out = DenseMatrix::zeros(h.cols(), bm.map_or(3, |m| m.cols()));
            for a in 0..h.cols() {
                for col in 0..out.cols() {
                    let mut acc = 0.0;
                    for &i in &kept {
                        for j in 0..6 {
                            let ehat_b = match bm {
                                Some(m) => (0..3).map(|c| e.get(i, c) * m.get(c, col)).sum::<f64>(),
                                None => e.get(i, col),
                            };
                            acc += h.get(j, a) * sk.get(i, j) * ehat_b;
                        }
                    }
                    out.set(a, col, acc);
                }
            }
            out
        };
        let id = DenseMatrix::identity(6);
        let h = |l: usize| {
            if l == 0 {
                spmm(&s, &x, false).unwrap()
            } else {
                cache.aggregated(l).clone()
            }
        };
        assert!(g.weights[2].max_abs_diff(&oracle(&id, &h(2), None)) < 1e-12);
        assert!(g.weights[1].max_abs_diff(&oracle(&sd, &h(1), Some(b.get(2)))) < 1e-12);
        assert!(g.weights[0].max_abs_diff(&oracle(&s2, &h(0), Some(b.get(1)))) < 1e-12);
    }

    #[test]
    fn linear_in_error() {
        let (s, x, params, b, e1) = setup(6);
        let e2 = random_matrix(6, 3, 1.0, &mut Rng::new(60)).unwrap();
        let cache = forward(&params, &s, &x).unwrap();
        let mask = [true, true, false, true, true, true];
        let combo = e1.scale(2.0).add(&e2.scale(-0.5)).unwrap();
        let g = dfa_grads(&cache, &combo, &mask, &b, &s, true).unwrap();
        let g1 = dfa_grads(&cache, &e1, &mask, &b, &s, true).unwrap();
        let g2 = dfa_grads(&cache, &e2, &mask, &b, &s, true).unwrap();
        for l in 0..3 {
            let want = g1.weights[l].scale(2.0).add(&g2.weights[l].scale(-0.5)).unwrap();
            assert!(g.weights[l].max_abs_diff(&want) < 1e-10);
        }
        let zero = dfa_grads(&cache, &DenseMatrix::zeros(6, 3), &mask, &b, &s, false).unwrap();
        assert!(zero.weights.iter().all(|w| w.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn repeatable() {
        let (s, x, params, b, e) = setup(7);
        let cache = forward(&params, &s, &x).unwrap();
        let mask = [true; 6];
        let a = dfa_grads(&cache, &e, &mask, &b, &s, false).unwrap();
        let again = dfa_grads(&cache, &e, &mask, &b, &s, false).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn node_filter_needs_generator() {
        let cfg = DfaConfig {
            train: TrainConfig::default(),
            spread: SpreadConfig { alpha: 0.1, iterations: 10, epsilon: 0.5 },
            use_error_generator: false,
            use_node_filter: true,
            modulate_by_activation_derivative: false,
            record_alignment: false,
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
