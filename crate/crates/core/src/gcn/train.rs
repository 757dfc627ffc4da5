use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{gcn_loss_and_grad, predict};
use super::params::{GcnDims, GcnParams};
use crate::dataset::ClassId;
use crate::error::{Error, Result};
use crate::scene_graph::SceneGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub layers: usize,
    pub hidden: usize,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 64,
            lr: 1e-3,
            momentum: 0.9,
            epochs: 50,
            batch: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: GcnParams,
    /// Mean per-sample loss over each epoch's minibatches.
    pub epoch_losses: Vec<f64>,
}

/// Minibatch SGD with momentum on mean cross-entropy; shuffling is seeded.
pub fn train(
    dataset: &[(SceneGraph, ClassId)],
    num_classes: usize,
    hyper: &TrainHyper,
) -> Result<TrainOutcome> {
    let first = dataset.first().ok_or(Error::EmptyDataset)?;
    let input = first.0.feature_dim().ok_or(Error::EmptyGraph)?;
    let dims = GcnDims {
        input,
        hidden: hyper.hidden,
        layers: hyper.layers,
        classes: num_classes,
    };
    let params = GcnParams::init(dims, hyper.seed)?;
    train_from(params, dataset, hyper)
}

/// Continues training from given parameters.
pub fn train_from(
    mut params: GcnParams,
    dataset: &[(SceneGraph, ClassId)],
    hyper: &TrainHyper,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if hyper.batch == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(0x9e37_79b9));
    let mut velocity = params.zeros_like();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(hyper.batch) {
            let batch: Vec<(&SceneGraph, ClassId)> = chunk
                .iter()
                .map(|&i| (&dataset[i].0, dataset[i].1))
                .collect();
            let (loss, grad) = gcn_loss_and_grad(&batch, &params)?;
            sum += loss * batch.len() as f64;
            for ((p, v), g) in params
                .values_mut()
                .zip(velocity.values_mut())
                .zip(grad.values())
            {
                *v = hyper.momentum * *v - hyper.lr * g;
                *p += *v;
            }
        }
        epoch_losses.push(sum / dataset.len() as f64);
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("trained parameters".into()));
    }
    Ok(TrainOutcome {
        params,
        epoch_losses,
    })
}

/// Fraction of graphs whose top-1 prediction matches the label.
pub fn accuracy(dataset: &[(SceneGraph, ClassId)], params: &GcnParams) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut hits = 0;
    for (g, c) in dataset {
        if predict(g, params)?.1 == *c {
            hits += 1;
        }
    }
    Ok(hits as f64 / dataset.len() as f64)
}
