//! The epoch loop shared by both trainers.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bp::{bce_loss, output_error};
use crate::dataset::{Dataset, Split};
use crate::diagnostics::{accuracy, Alignment, EpochRecord};
use crate::error::{Error, Result};
use crate::gcn::{forward_input, init_params, predict, ForwardCache, GcnInput, GcnParams, Grads};
use crate::graph::normalized_operator;
use crate::numkit::{DenseMatrix, Rng, SparseMatrix};
use crate::optim::{adam_step, AdamHyper, AdamState};

/// A set of weight matrices held fixed from epoch `start` until the next
/// stage begins. Layers are 0-based weight indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeStage {
    pub start: usize,
    pub frozen: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FreezeSchedule {
    pub stages: Vec<FreezeStage>,
}

impl FreezeSchedule {
    pub fn validate(&self, layers: usize) -> Result<()> {
        for (k, st) in self.stages.iter().enumerate() {
            if k == 0 && st.start != 0 {
                return Err(Error::Config("first freeze stage must start at epoch 0".into()));
            }
            if k > 0 && st.start <= self.stages[k - 1].start {
                return Err(Error::Config("freeze stages must start at increasing epochs".into()));
            }
            if let Some(&l) = st.frozen.iter().find(|&&l| l >= layers) {
                return Err(Error::Config(format!(
                    "freeze stage {k} names layer {l}, network has {layers}"
                )));
            }
        }
        Ok(())
    }

    /// Stage index in force at `epoch` and the matching per-layer mask.
    pub fn at(&self, epoch: usize, layers: usize) -> (usize, Vec<bool>) {
        let mut mask = vec![false; layers];
        let Some(k) = self.stages.iter().rposition(|st| st.start <= epoch) else {
            return (0, mask);
        };
        for &l in &self.stages[k].frozen {
            mask[l] = true;
        }
        (k, mask)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub hidden: usize,
    /// Number of weight matrices.
    pub layers: usize,
    #[serde(default)]
    pub freeze: FreezeSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            lr: 0.01,
            weight_decay: 5e-4,
            hidden: 64,
            layers: 3,
            freeze: FreezeSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be finite and >= 0, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight decay must be finite and >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.layers == 0 || self.hidden == 0 {
            return Err(Error::Config("layers and hidden width must be positive".into()));
        }
        self.freeze.validate(self.layers)
    }

    pub fn dims(&self, input: usize, classes: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(self.hidden, self.layers - 1));
        dims.push(classes);
        dims
    }
}

/// A dataset and split prepared for training: operator, cached first-layer
/// aggregate, one-hot targets and the training mask.
#[derive(Debug, Clone)]
pub struct Problem {
    pub s: SparseMatrix,
    pub input: Arc<GcnInput>,
    pub targets: DenseMatrix,
    pub labels: Vec<usize>,
    pub split: Split,
    pub train_mask: Vec<bool>,
    pub num_classes: usize,
}

impl Problem {
    pub fn new(dataset: &Dataset, split: &Split) -> Result<Self> {
        let n = dataset.node_count();
        split.validate(n)?;
        let s = normalized_operator(&dataset.graph);
        let input = Arc::new(GcnInput::from_dense(&dataset.features));
        Ok(Self {
            s,
            input,
            targets: dataset.one_hot(),
            labels: dataset.labels.clone(),
            split: split.clone(),
            train_mask: split.train_mask(n),
            num_classes: dataset.num_classes,
        })
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.input.features().cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    /// One record per epoch `0..=epochs`, taken before that epoch's update.
    pub records: Vec<EpochRecord>,
    pub params: GcnParams,
    pub best_epoch: usize,
    pub best_val_acc: Option<f64>,
    /// Test accuracy at `best_epoch`.
    pub test_acc: Option<f64>,
}

pub fn initial_params(problem: &Problem, config: &TrainConfig, rng: &mut Rng) -> Result<GcnParams> {
    config.validate()?;
    init_params(&config.dims(problem.feature_dim(), problem.num_classes), rng)
}

fn optional_accuracy(pred: &[usize], truth: &[usize], idx: &[usize]) -> Result<Option<f64>> {
    if idx.is_empty() {
        return Ok(None);
    }
    accuracy(pred, truth, idx).map(Some)
}

/// Runs forward, error, `step` and Adam for `config.epochs` epochs.
///
/// `step` maps the current parameters, forward cache, train-masked output
/// error and epoch index to weight gradients and optional diagnostics.
pub fn run<F>(problem: &Problem, config: &TrainConfig, mut params: GcnParams, mut step: F) -> Result<TrainResult>
where
    F: FnMut(&GcnParams, &ForwardCache, &DenseMatrix, usize) -> Result<(Grads, Option<Alignment>)>,
{
    config.validate()?;
    let layers = params.num_layers();
    let mut adam = AdamState::new(&params);
    let mut records = Vec::with_capacity(config.epochs + 1);
    let mut best: Option<(usize, f64)> = None;
    for epoch in 0..=config.epochs {
        let cache = forward_input(&params, &problem.s, &problem.input)?;
        let loss = bce_loss(cache.prediction(), &problem.targets, &problem.train_mask)?;
        if !loss.is_finite() {
            return Err(Error::invalid(format!("training diverged at epoch {epoch}")));
        }
        let pred = predict(&cache);
        let (stage, frozen) = config.freeze.at(epoch, layers);
        let mut record = EpochRecord {
            epoch,
            stage,
            train_loss: loss,
            train_acc: accuracy(&pred, &problem.labels, &problem.split.train)?,
            val_acc: optional_accuracy(&pred, &problem.labels, &problem.split.val)?,
            test_acc: optional_accuracy(&pred, &problem.labels, &problem.split.test)?,
            alignment: None,
        };
        if let Some(v) = record.val_acc {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((epoch, v));
            }
        }
        if epoch < config.epochs {
            let e = output_error(cache.prediction(), &problem.targets, &problem.train_mask)?;
            let (grads, alignment) = step(&params, &cache, &e, epoch)?;
            if !grads.is_finite() {
                return Err(Error::invalid(format!("non-finite gradient at epoch {epoch}")));
            }
            record.alignment = alignment;
            adam_step(
                &mut adam,
                &mut params,
                &grads,
                config.lr,
                config.weight_decay,
                AdamHyper::default(),
                &frozen,
            )?;
        }
        records.push(record);
    }
    let best_epoch = best.map_or(config.epochs, |(e, _)| e);
    Ok(TrainResult {
        test_acc: records[best_epoch].test_acc,
        best_val_acc: best.map(|(_, v)| v),
        best_epoch,
        records,
        params,
    })
}
