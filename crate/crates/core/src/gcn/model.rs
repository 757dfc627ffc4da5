use serde::{Deserialize, Serialize};

use super::params::GcnParams;
use crate::dataset::ClassId;
use crate::error::{Error, Result};
use crate::scene_graph::SceneGraph;

/// Class probabilities output by the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pdv(pub Vec<f64>);

impl Pdv {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Highest probability, lowest index on ties.
    pub fn top1(&self) -> ClassId {
        argmax(&self.0)
    }
}

/// Index of the maximum, first occurrence on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

struct LayerCache {
    /// Self-inclusive neighbor sums of the layer inputs, per node.
    aggregated: Vec<Vec<f64>>,
    pre_activation: Vec<Vec<f64>>,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    /// Final node states.
    states: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    probs: Vec<f64>,
}

fn aggregate(neighbors: &[Vec<usize>], features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    features
        .iter()
        .enumerate()
        .map(|(i, own)| {
            let mut sum = own.clone();
            for &j in &neighbors[i] {
                for (s, v) in sum.iter_mut().zip(&features[j]) {
                    *s += v;
                }
            }
            sum
        })
        .collect()
}

fn check_finite(values: &[Vec<f64>], what: &str) -> Result<()> {
    if values.iter().flatten().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn forward_cached(graph: &SceneGraph, params: &GcnParams) -> Result<ForwardCache> {
    if graph.nodes.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let dim = params.dims.input;
    if let Some(bad) = graph.nodes.iter().find(|n| n.feature.len() != dim) {
        return Err(Error::FeatureDimMismatch {
            expected: dim,
            found: bad.feature.len(),
        });
    }
    let neighbors = graph.neighbors();
    let mut states: Vec<Vec<f64>> = graph.nodes.iter().map(|n| n.feature.clone()).collect();
    let mut layers = Vec::with_capacity(params.layers.len());
    for (l, dense) in params.layers.iter().enumerate() {
        let aggregated = aggregate(&neighbors, &states);
        let pre_activation: Vec<Vec<f64>> = aggregated
            .iter()
            .map(|m| {
                let mut z = vec![0.0; dense.outputs];
                dense.apply(m, &mut z);
                z
            })
            .collect();
        check_finite(&pre_activation, &format!("graph convolution layer {l}"))?;
        states = pre_activation
            .iter()
            .map(|z| z.iter().map(|&v| v.max(0.0)).collect())
            .collect();
        layers.push(LayerCache {
            aggregated,
            pre_activation,
        });
    }
    let n = states.len() as f64;
    let mut pooled = vec![0.0; states[0].len()];
    for s in &states {
        for (p, v) in pooled.iter_mut().zip(s) {
            *p += v;
        }
    }
    pooled.iter_mut().for_each(|p| *p /= n);
    let mut logits = vec![0.0; params.readout.outputs];
    params.readout.apply(&pooled, &mut logits);
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("readout layer".into()));
    }
    Ok(ForwardCache {
        layers,
        states,
        pooled,
        probs: softmax(&logits),
    })
}

/// SUM aggregation over self and neighbors, ReLU layers, mean readout, softmax.
pub fn gcn_forward(graph: &SceneGraph, params: &GcnParams) -> Result<Pdv> {
    forward_cached(graph, params).map(|c| Pdv(c.probs))
}

pub fn predict(graph: &SceneGraph, params: &GcnParams) -> Result<(Pdv, ClassId)> {
    let pdv = gcn_forward(graph, params)?;
    let top = pdv.top1();
    Ok((pdv, top))
}

/// Adds `scale * d(loss)/d(params)` of one graph into `grad`, returns its cross-entropy.
fn accumulate(
    graph: &SceneGraph,
    class: ClassId,
    params: &GcnParams,
    scale: f64,
    grad: &mut GcnParams,
) -> Result<f64> {
    let cache = forward_cached(graph, params)?;
    let loss = -cache.probs[class].max(f64::MIN_POSITIVE).ln();

    let mut d_logits = cache.probs.clone();
    d_logits[class] -= 1.0;
    d_logits.iter_mut().for_each(|d| *d *= scale);

    let readout = &params.readout;
    let g = &mut grad.readout;
    for (i, &p) in cache.pooled.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (o, &d) in d_logits.iter().enumerate() {
            g.weight[i * readout.outputs + o] += p * d;
        }
    }
    for (b, d) in g.bias.iter_mut().zip(&d_logits) {
        *b += d;
    }
    let n = cache.states.len();
    let mut d_pooled = vec![0.0; readout.inputs];
    for (i, dp) in d_pooled.iter_mut().enumerate() {
        let row = &readout.weight[i * readout.outputs..(i + 1) * readout.outputs];
        *dp = row.iter().zip(&d_logits).map(|(w, d)| w * d).sum::<f64>() / n as f64;
    }
    let mut d_states: Vec<Vec<f64>> = vec![d_pooled; n];

    let neighbors = graph.neighbors();
    for (l, (dense, layer)) in params.layers.iter().zip(&cache.layers).enumerate().rev() {
        let g = &mut grad.layers[l];
        let d_pre: Vec<Vec<f64>> = d_states
            .iter()
            .zip(&layer.pre_activation)
            .map(|(ds, z)| {
                ds.iter()
                    .zip(z)
                    .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
                    .collect()
            })
            .collect();
        for (m, dz) in layer.aggregated.iter().zip(&d_pre) {
            for (i, &mi) in m.iter().enumerate() {
                if mi == 0.0 {
                    continue;
                }
                let row = &mut g.weight[i * dense.outputs..(i + 1) * dense.outputs];
                for (w, &d) in row.iter_mut().zip(dz) {
                    *w += mi * d;
                }
            }
            for (b, &d) in g.bias.iter_mut().zip(dz) {
                *b += d;
            }
        }
        if l == 0 {
            break;
        }
        let d_agg: Vec<Vec<f64>> = d_pre
            .iter()
            .map(|dz| {
                (0..dense.inputs)
                    .map(|i| {
                        let row = &dense.weight[i * dense.outputs..(i + 1) * dense.outputs];
                        row.iter().zip(dz).map(|(w, d)| w * d).sum()
                    })
                    .collect()
            })
            .collect();
        // The aggregation matrix (adjacency plus identity) is symmetric.
        d_states = aggregate(&neighbors, &d_agg);
    }
    Ok(loss)
}

/// Mean cross-entropy over the batch and its analytic gradient.
pub fn gcn_loss_and_grad(
    batch: &[(&SceneGraph, ClassId)],
    params: &GcnParams,
) -> Result<(f64, GcnParams)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grad = params.zeros_like();
    let mut total = 0.0;
    for &(graph, class) in batch {
        if class >= params.dims.classes {
            return Err(Error::InvalidConfig(format!(
                "class {class} out of range for {} classes",
                params.dims.classes
            )));
        }
        total += accumulate(graph, class, params, scale, &mut grad)?;
    }
    Ok((total * scale, grad))
}

/// Mean cross-entropy only.
pub fn gcn_loss(batch: &[(&SceneGraph, ClassId)], params: &GcnParams) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for &(graph, class) in batch {
        let pdv = gcn_forward(graph, params)?;
        total += -pdv.0[class].max(f64::MIN_POSITIVE).ln();
    }
    Ok(total / batch.len() as f64)
}
