//! Deterministic minibatch SGD with momentum on softmax cross-entropy.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};
use crate::neuron::data::{GroupedDataset, Split};
use crate::neuron::network::{softmax, Dense, NeuronNetwork, Provenance, Trace};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            hidden: vec![16, 16],
            epochs: 40,
            learning_rate: 0.02,
            momentum: 0.9,
            batch_size: 32,
        }
    }
}

/// Mean loss beyond which training is treated as diverged. A model that
/// predicts uniformly scores `ln C`, so this is far past any useful fit.
const LOSS_CEILING: f64 = 1e6;

/// `logsumexp(z) − z_y`, stable for very large logits.
fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// He-uniform weights, zero biases.
pub fn init_network(layer_sizes: &[usize], seed: u64) -> Result<NeuronNetwork> {
    if layer_sizes.len() < 3 || layer_sizes.contains(&0) {
        return Err(ShapleyError::invalid(
            "train.hidden",
            "need input, at least one non-empty hidden layer, and output",
        ));
    }
    let mut rng = stream_rng(seed, Stream::Init, 0);
    let layers = layer_sizes
        .windows(2)
        .map(|w| {
            let (inputs, outputs) = (w[0], w[1]);
            let limit = (6.0 / inputs as f64).sqrt();
            let mut d = Dense::zeros(inputs, outputs);
            for x in d.weights.iter_mut() {
                *x = rng.random_range(-limit..limit);
            }
            d
        })
        .collect();
    NeuronNetwork::new(layers)
}

pub fn train(data: &GroupedDataset, cfg: &TrainConfig, dataset_seed: u64) -> Result<NeuronNetwork> {
    let rows = data.rows(Split::Fit);
    if rows.is_empty() {
        return Err(ShapleyError::EmptySet("fit split".into()));
    }
    if cfg.batch_size == 0 {
        return Err(ShapleyError::invalid("train.batch_size", "must be at least 1"));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(ShapleyError::invalid("train.learning_rate", "must be positive"));
    }
    let mut sizes = vec![data.dim];
    sizes.extend(&cfg.hidden);
    sizes.push(data.n_classes);
    let mut net = init_network(&sizes, cfg.seed)?;
    net.provenance = Provenance {
        dataset_seed,
        train_seed: cfg.seed,
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
    };
    let zeros = |net: &NeuronNetwork| -> Vec<Dense> {
        net.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect()
    };
    let mut velocity = zeros(&net);
    let mut order = rows.clone();
    let mut trace = Trace::default();
    for epoch in 0..cfg.epochs {
        order.copy_from_slice(&rows);
        order.shuffle(&mut stream_rng(cfg.seed, Stream::Shuffle, epoch as u64));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = zeros(&net);
            for &r in batch {
                net.forward_into(data.row(r), None, &mut trace);
                let mut d = softmax(&trace.logits);
                epoch_loss += cross_entropy(&trace.logits, data.classes[r]);
                d[data.classes[r]] -= 1.0;
                net.backward(&trace, &d, None, Some(&mut grads));
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for ((layer, g), v) in net.layers.iter_mut().zip(&grads).zip(velocity.iter_mut()) {
                for ((w, gw), vw) in layer.weights.iter_mut().zip(&g.weights).zip(v.weights.iter_mut()) {
                    *vw = cfg.momentum * *vw - scale * gw;
                    *w += *vw;
                }
                for ((b, gb), vb) in layer.bias.iter_mut().zip(&g.bias).zip(v.bias.iter_mut()) {
                    *vb = cfg.momentum * *vb - scale * gb;
                    *b += *vb;
                }
            }
        }
        let loss = epoch_loss / rows.len() as f64;
        let finite = loss.is_finite()
            && loss < LOSS_CEILING
            && net.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite()));
        if !finite {
            return Err(ShapleyError::Diverged { epoch, loss });
        }
    }
    Ok(net)
}
