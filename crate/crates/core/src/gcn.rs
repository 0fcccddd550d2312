//! Bias-free L-layer graph convolutional network.
//!
//! Layer `l` computes `H = S·X⁽ˡ⁾` and `H·W⁽ˡ⁾`; hidden layers apply relu and
//! the output layer applies a sigmoid.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numkit::{
    elementwise, matmul, matmul_tn, random_matrix, spmm, DenseMatrix, Elementwise, Matrix, Rng, SparseMatrix,
};

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    dims: Vec<usize>,
    pub weights: Vec<DenseMatrix>,
}

impl GcnParams {
    pub fn new(dims: Vec<usize>, weights: Vec<DenseMatrix>) -> Result<Self> {
        validate_dims(&dims)?;
        if weights.len() != dims.len() - 1 {
            return Err(Error::invalid(format!(
                "{} layer dims need {} weight matrices, got {}",
                dims.len(),
                dims.len() - 1,
                weights.len()
            )));
        }
        for (l, w) in weights.iter().enumerate() {
            if w.shape() != (dims[l], dims[l + 1]) {
                return Err(Error::shape("GcnParams", (dims[l], dims[l + 1]), w.shape()));
            }
        }
        Ok(Self { dims, weights })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_classes(&self) -> usize {
        *self.dims.last().unwrap()
    }
}

pub(crate) fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::invalid(format!(
            "layer dims need at least two positive entries, got {dims:?}"
        )));
    }
    Ok(())
}

/// He fan-in initialization: `W⁽ˡ⁾ ~ N(0, 2/dims[l])`.
pub fn init_params(dims: &[usize], rng: &mut Rng) -> Result<GcnParams> {
    validate_dims(dims)?;
    let weights = dims
        .windows(2)
        .map(|w| random_matrix(w[0], w[1], (2.0 / w[0] as f64).sqrt(), rng))
        .collect::<Result<Vec<_>>>()?;
    GcnParams::new(dims.to_vec(), weights)
}

/// Per-layer weight gradients `δW⁽ˡ⁾` plus the update signals `δX⁽ˡ⁾`
/// delivered to each hidden activation (`directions[l - 1]` for layer `l`).
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<DenseMatrix>,
    pub directions: Vec<DenseMatrix>,
}

impl Grads {
    pub fn from_weights(weights: Vec<DenseMatrix>) -> Self {
        Self {
            weights,
            directions: Vec::new(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.directions).all(DenseMatrix::is_finite)
    }
}

/// Input features shared by every forward pass. Bag-of-words inputs are
/// kept in CSR form.
#[derive(Debug, Clone)]
pub struct GcnInput {
    features: Matrix,
}

impl GcnInput {
    pub fn new(features: Matrix) -> Self {
        Self { features }
    }

    /// Stores features in CSR form when they are mostly zero.
    pub fn from_dense(features: &DenseMatrix) -> Self {
        Self::new(Matrix::auto(features.clone()))
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }
}

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Arc<GcnInput>,
    hidden_aggregated: Vec<DenseMatrix>,
    preactivations: Vec<DenseMatrix>,
    hidden: Vec<DenseMatrix>,
    prediction: DenseMatrix,
}

impl ForwardCache {
    pub fn num_layers(&self) -> usize {
        self.preactivations.len()
    }

    /// `H⁽ˡ⁾ = S·X⁽ˡ⁾` for hidden layers `1 <= l < L`.
    pub fn aggregated(&self, l: usize) -> &DenseMatrix {
        assert!(l >= 1 && l < self.num_layers(), "aggregate of layer {l} is not stored");
        &self.hidden_aggregated[l - 1]
    }

    /// Fan-in width of layer `l`.
    pub fn layer_input_dim(&self, l: usize) -> usize {
        if l == 0 {
            self.input.features().cols()
        } else {
            self.hidden[l - 1].cols()
        }
    }

    /// `H⁽ˡ⁾ᵀ·g`. The input layer's aggregate is never formed; its product is
    /// taken as `X⁽⁰⁾ᵀ(Sᵀg)`, which is cheaper for sparse features.
    pub fn weight_grad(&self, l: usize, s: &SparseMatrix, g: &DenseMatrix) -> Result<DenseMatrix> {
        if l == 0 {
            self.input.features().transpose_matmul(&spmm(s, g, true)?)
        } else {
            matmul_tn(self.aggregated(l), g)
        }
    }

    /// `H⁽ˡ⁾·W⁽ˡ⁾`.
    pub fn preactivation(&self, l: usize) -> &DenseMatrix {
        &self.preactivations[l]
    }

    pub fn preactivations(&self) -> &[DenseMatrix] {
        &self.preactivations
    }

    pub fn input_features(&self) -> &Matrix {
        self.input.features()
    }

    /// Hidden activation `X⁽ˡ⁾` for `1 <= l < L`.
    pub fn hidden(&self, l: usize) -> &DenseMatrix {
        assert!(l >= 1 && l < self.num_layers(), "hidden layer {l} out of range");
        &self.hidden[l - 1]
    }

    /// Output logits `X⁽ᴸ⁾`.
    pub fn output(&self) -> &DenseMatrix {
        self.preactivations.last().unwrap()
    }

    /// `sigmoid(X⁽ᴸ⁾)`.
    pub fn prediction(&self) -> &DenseMatrix {
        &self.prediction
    }

    /// Number of activation matrices `X⁽⁰⁾ … X⁽ᴸ⁾`.
    pub fn num_activations(&self) -> usize {
        self.num_layers() + 1
    }
}

pub fn forward(params: &GcnParams, s: &SparseMatrix, x: &DenseMatrix) -> Result<ForwardCache> {
    if x.cols() != params.dims()[0] {
        return Err(Error::shape("forward", (x.rows(), params.dims()[0]), x.shape()));
    }
    let input = Arc::new(GcnInput::from_dense(x));
    forward_input(params, s, &input)
}

pub fn forward_input(
    params: &GcnParams,
    s: &SparseMatrix,
    input: &Arc<GcnInput>,
) -> Result<ForwardCache> {
    let n = input.node_count();
    if input.features().cols() != params.dims()[0] {
        return Err(Error::shape(
            "forward",
            (n, params.dims()[0]),
            input.features().shape(),
        ));
    }
    if s.shape() != (n, n) {
        return Err(Error::shape("forward", s.shape(), (n, n)));
    }
    let layers = params.num_layers();
    let mut hidden_aggregated = Vec::with_capacity(layers - 1);
    let mut hidden = Vec::with_capacity(layers - 1);
    let mut preactivations = Vec::with_capacity(layers);
    for (l, w) in params.weights.iter().enumerate() {
        let pre = if l == 0 {
            spmm(s, &input.features().matmul(w)?, false)?
        } else {
            let h = spmm(s, &hidden[l - 1], false)?;
            let pre = matmul(&h, w)?;
            hidden_aggregated.push(h);
            pre
        };
        if l + 1 < layers {
            hidden.push(elementwise(Elementwise::Relu, &pre));
        }
        preactivations.push(pre);
    }
    let prediction = elementwise(Elementwise::Sigmoid, preactivations.last().unwrap());
    Ok(ForwardCache {
        input: Arc::clone(input),
        hidden_aggregated,
        preactivations,
        hidden,
        prediction,
    })
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predict(cache: &ForwardCache) -> Vec<usize> {
    argmax_rows(cache.prediction())
}

pub fn argmax_rows(m: &DenseMatrix) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            let row = m.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
