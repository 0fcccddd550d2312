//! Adam with coupled L2 decay and per-layer freezing.

use crate::error::{Error, Result};
use crate::gcn::{GcnParams, Grads};
use crate::numkit::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per weight matrix.
///
/// Each layer keeps its own step count, advanced only when the layer is
/// updated, so bias correction restarts cleanly after a frozen stage.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<DenseMatrix>,
    pub v: Vec<DenseMatrix>,
    pub steps: Vec<u64>,
}

impl AdamState {
    pub fn new(params: &GcnParams) -> Self {
        let zeros: Vec<DenseMatrix> = params
            .weights
            .iter()
            .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            steps: vec![0; params.num_layers()],
        }
    }
}

/// One Adam update. Layers with `frozen[l]` set are skipped entirely:
/// weights, moments and step count stay bitwise unchanged.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut GcnParams,
    grads: &Grads,
    lr: f64,
    weight_decay: f64,
    hyper: AdamHyper,
    frozen: &[bool],
) -> Result<()> {
    let layers = params.num_layers();
    if grads.weights.len() != layers || state.m.len() != layers || frozen.len() != layers {
        return Err(Error::invalid(format!(
            "adam_step: {layers} layers, {} gradients, {} moment sets, {} freeze flags",
            grads.weights.len(),
            state.m.len(),
            frozen.len()
        )));
    }
    let AdamHyper { beta1, beta2, eps } = hyper;
    for l in 0..layers {
        if frozen[l] {
            continue;
        }
        let w = &mut params.weights[l];
        let g = &grads.weights[l];
        if g.shape() != w.shape() || state.m[l].shape() != w.shape() {
            return Err(Error::shape("adam_step", w.shape(), g.shape()));
        }
        state.steps[l] += 1;
        let t = state.steps[l] as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (m, v) = (state.m[l].data_mut(), state.v[l].data_mut());
        for (((wi, &gi), mi), vi) in w.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            let gd = gi + weight_decay * *wi;
            *mi = beta1 * *mi + (1.0 - beta1) * gd;
            *vi = beta2 * *vi + (1.0 - beta2) * gd * gd;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *wi -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(w: f64) -> GcnParams {
        GcnParams::new(vec![1, 1], vec![DenseMatrix::from_rows(&[[w]])]).unwrap()
    }

    fn scalar_grads(g: f64) -> Grads {
        Grads::from_weights(vec![DenseMatrix::from_rows(&[[g]])])
    }

    #[test]
    fn zero_gradient_no_decay_is_noop() {
        let mut p = scalar_params(0.3);
        let mut s = AdamState::new(&p);
        adam_step(&mut s, &mut p, &scalar_grads(0.0), 0.1, 0.0, AdamHyper::default(), &[false])
            .unwrap();
        assert_eq!(p, scalar_params(0.3));
    }

    #[test]
    fn first_step_closed_form() {
        let (lr, g, eps) = (0.01, 0.37, 1e-8);
        let mut p = scalar_params(1.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut s, &mut p, &scalar_grads(g), lr, 0.0, AdamHyper::default(), &[false])
            .unwrap();
        // m̂ = g and v̂ = g² after one step.
        let want = 1.0 - lr * g / (g.abs() + eps);
        assert!((p.weights[0].get(0, 0) - want).abs() < 1e-15);
        assert!((p.weights[0].get(0, 0) - (1.0 - lr)).abs() < 1e-9);
    }

    #[test]
    fn frozen_layer_untouched() {
        let mut p = GcnParams::new(
            vec![1, 1, 1],
            vec![DenseMatrix::from_rows(&[[0.5]]), DenseMatrix::from_rows(&[[-0.5]])],
        )
        .unwrap();
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let g = Grads::from_weights(vec![
            DenseMatrix::from_rows(&[[1.0]]),
            DenseMatrix::from_rows(&[[1.0]]),
        ]);
        adam_step(&mut s, &mut p, &g, 0.1, 0.01, AdamHyper::default(), &[true, false]).unwrap();
        assert_eq!(p.weights[0], before.weights[0]);
        assert_eq!(s.m[0].get(0, 0), 0.0);
        assert_eq!(s.v[0].get(0, 0), 0.0);
        assert_eq!(s.steps[0], 0);
        assert_ne!(p.weights[1], before.weights[1]);
    }

    #[test]
    fn zero_lr_advances_moments_only() {
        let mut p = scalar_params(0.2);
        let mut s = AdamState::new(&p);
        adam_step(&mut s, &mut p, &scalar_grads(0.5), 0.0, 0.0, AdamHyper::default(), &[false])
            .unwrap();
        assert_eq!(p, scalar_params(0.2));
        assert!(s.m[0].get(0, 0) > 0.0);
        assert!(s.v[0].get(0, 0) > 0.0);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = scalar_params(0.2);
        let mut s = AdamState::new(&p);
        let g = Grads::from_weights(vec![DenseMatrix::zeros(2, 1)]);
        assert!(adam_step(&mut s, &mut p, &g, 0.1, 0.0, AdamHyper::default(), &[false]).is_err());
    }
}
