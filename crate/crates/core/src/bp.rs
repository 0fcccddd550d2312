//! Loss, output error and exact backpropagation through the GCN.

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::gcn::{ForwardCache, GcnParams, Grads};
use crate::numkit::{elementwise, matmul_nt, spmm, DenseMatrix, Elementwise, Rng, SparseMatrix};
use crate::training::{self, Problem, TrainConfig, TrainResult};

const CLIP: f64 = 1e-12;

fn check_rows(op: &'static str, pred: &DenseMatrix, targets: &DenseMatrix, mask: &[bool]) -> Result<()> {
    if pred.shape() != targets.shape() {
        return Err(Error::shape(op, pred.shape(), targets.shape()));
    }
    if mask.len() != pred.rows() {
        return Err(Error::shape(op, pred.shape(), (mask.len(), pred.cols())));
    }
    Ok(())
}

/// Mean binary cross-entropy over the masked rows, summed over classes.
/// Predictions are clipped to `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(pred: &DenseMatrix, targets: &DenseMatrix, mask: &[bool]) -> Result<f64> {
    check_rows("bce_loss", pred, targets, mask)?;
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::invalid("bce_loss: mask selects no rows"));
    }
    let mut total = 0.0;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for (&p, &y) in pred.row(i).iter().zip(targets.row(i)) {
            let p = p.clamp(CLIP, 1.0 - CLIP);
            total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
    }
    Ok(total / count as f64)
}

/// `Ỹ − Y` on masked rows, zero elsewhere. Not divided by the row count.
pub fn output_error(pred: &DenseMatrix, targets: &DenseMatrix, mask: &[bool]) -> Result<DenseMatrix> {
    check_rows("output_error", pred, targets, mask)?;
    let mut e = DenseMatrix::zeros(pred.rows(), pred.cols());
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for ((o, &p), &y) in e.row_mut(i).iter_mut().zip(pred.row(i)).zip(targets.row(i)) {
            *o = p - y;
        }
    }
    Ok(e)
}

fn check_cache(params: &GcnParams, cache: &ForwardCache, e: &DenseMatrix, s: &SparseMatrix) -> Result<()> {
    if cache.num_layers() != params.num_layers() {
        return Err(Error::invalid(format!(
            "cache has {} layers, params {}",
            cache.num_layers(),
            params.num_layers()
        )));
    }
    for (l, w) in params.weights.iter().enumerate() {
        if cache.preactivation(l).cols() != w.cols() || cache.layer_input_dim(l) != w.rows() {
            return Err(Error::shape("backward", w.shape(), cache.preactivation(l).shape()));
        }
    }
    if e.shape() != cache.output().shape() {
        return Err(Error::shape("backward", cache.output().shape(), e.shape()));
    }
    let n = e.rows();
    if s.shape() != (n, n) {
        return Err(Error::shape("backward", s.shape(), (n, n)));
    }
    Ok(())
}

/// Gradient of the summed masked BCE with respect to every weight matrix,
/// given the logit gradient `e`. `directions` holds `∂J/∂X⁽ˡ⁾` for each
/// hidden layer.
pub fn backward(params: &GcnParams, cache: &ForwardCache, e: &DenseMatrix, s: &SparseMatrix) -> Result<Grads> {
    check_cache(params, cache, e, s)?;
    let layers = params.num_layers();
    let mut weights = vec![DenseMatrix::zeros(0, 0); layers];
    let mut directions = vec![DenseMatrix::zeros(0, 0); layers - 1];
    let mut delta_pre = e.clone();
    for l in (0..layers).rev() {
        weights[l] = cache.weight_grad(l, s, &delta_pre)?;
        if l == 0 {
            break;
        }
        let delta_h = matmul_nt(&delta_pre, &params.weights[l])?;
        let delta_x = spmm(s, &delta_h, true)?;
        let gate = elementwise(Elementwise::ReluDerivative, cache.preactivation(l - 1));
        delta_pre = delta_x.hadamard(&gate)?;
        directions[l - 1] = delta_x;
    }
    Ok(Grads { weights, directions })
}

/// Trains with exact gradients.
pub fn train_bp(dataset: &Dataset, split: &Split, config: &TrainConfig, rng: &mut Rng) -> Result<TrainResult> {
    train_bp_problem(&Problem::new(dataset, split)?, config, rng)
}

pub fn train_bp_problem(problem: &Problem, config: &TrainConfig, rng: &mut Rng) -> Result<TrainResult> {
    let params = training::initial_params(problem, config, rng)?;
    training::run(problem, config, params, |params, cache, e, _| {
        Ok((backward(params, cache, e, &problem.s)?, None))
    })
}
