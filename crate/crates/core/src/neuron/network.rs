//! Dense rectifier network whose hidden units are the players.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};

pub const NETWORK_FORMAT: &str = "nshap-network";
pub const NETWORK_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    pub fn row(&self, unit: usize) -> &[f64] {
        &self.weights[unit * self.inputs..(unit + 1) * self.inputs]
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.outputs).map(|u| {
            self.row(u)
                .iter()
                .zip(x)
                .fold(self.bias[u], |acc, (w, v)| acc + w * v)
        }));
    }
}

/// Where a network came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_seed: u64,
    pub train_seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronNetwork {
    pub layers: Vec<Dense>,
    pub provenance: Provenance,
    /// Players permanently replaced by their mean (model repair).
    #[serde(default)]
    pub masked_players: Vec<usize>,
}

/// Per-player replacement values plus the set of players being replaced.
#[derive(Clone, Copy, Debug)]
pub struct Masking<'a> {
    pub fill: &'a [f64],
    pub absent: &'a [bool],
}

/// Activations recorded by a forward pass, for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    /// `acts[0]` is the input, `acts[l]` the post-mask output of hidden layer `l`.
    pub acts: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    format: String,
    version: u32,
    layer_sizes: Vec<usize>,
    layers: Vec<LayerDoc>,
    provenance: Provenance,
    #[serde(default)]
    masked_players: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl NeuronNetwork {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(ShapleyError::invalid(
                "network.layer_sizes",
                "need at least one hidden layer and an output layer",
            ));
        }
        for w in layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(ShapleyError::invalid("network.layer_sizes", "adjacent layers disagree"));
            }
        }
        for l in &layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(ShapleyError::invalid("network.layers", "weight or bias length mismatch"));
            }
        }
        Ok(NeuronNetwork {
            layers,
            provenance: Provenance::default(),
            masked_players: Vec::new(),
        })
    }

    /// `(input_dim, h_1, …, h_L, n_classes)`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn hidden(&self) -> &[Dense] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn n_players(&self) -> usize {
        self.hidden().iter().map(|l| l.outputs).sum()
    }

    /// `(hidden layer, unit)` of a player.
    pub fn player_unit(&self, player: usize) -> (usize, usize) {
        let mut p = player;
        for (l, layer) in self.hidden().iter().enumerate() {
            if p < layer.outputs {
                return (l, p);
            }
            p -= layer.outputs;
        }
        panic!("player {player} out of range");
    }

    pub fn player_index(&self, layer: usize, unit: usize) -> usize {
        self.hidden()[..layer].iter().map(|l| l.outputs).sum::<usize>() + unit
    }

    pub fn player_labels(&self) -> Vec<String> {
        (0..self.n_players())
            .map(|p| {
                let (l, u) = self.player_unit(p);
                format!("h{}u{}", l + 1, u)
            })
            .collect()
    }

    /// Forward pass; absent players emit their fill value instead of their
    /// rectified activation.
    pub fn forward(&self, x: &[f64], masking: Option<Masking<'_>>) -> Trace {
        let mut trace = Trace::default();
        self.forward_into(x, masking, &mut trace);
        trace
    }

    pub fn forward_into(&self, x: &[f64], masking: Option<Masking<'_>>, trace: &mut Trace) {
        let hidden = self.layers.len() - 1;
        trace.acts.resize_with(hidden + 1, Vec::new);
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(x);
        let mut offset = 0;
        for l in 0..hidden {
            let (prev, rest) = trace.acts.split_at_mut(l + 1);
            let out = &mut rest[0];
            self.layers[l].apply(&prev[l], out);
            for (u, v) in out.iter_mut().enumerate() {
                *v = v.max(0.0);
                if let Some(m) = masking {
                    if m.absent[offset + u] {
                        *v = m.fill[offset + u];
                    }
                }
            }
            offset += self.layers[l].outputs;
        }
        let mut logits = std::mem::take(&mut trace.logits);
        self.layers[hidden].apply(&trace.acts[hidden], &mut logits);
        trace.logits = logits;
    }

    pub fn probabilities(&self, x: &[f64], masking: Option<Masking<'_>>) -> Vec<f64> {
        softmax(&self.forward(x, masking).logits)
    }

    /// Backpropagates `dlogits` through a recorded trace.
    ///
    /// Returns per-layer `(dW, db)` when `grads` is requested, and always the
    /// gradient with respect to the input. Absent players pass no gradient.
    pub fn backward(
        &self,
        trace: &Trace,
        dlogits: &[f64],
        masking: Option<Masking<'_>>,
        mut grads: Option<&mut [Dense]>,
    ) -> Vec<f64> {
        let mut delta = dlogits.to_vec();
        let mut offset = self.n_players();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.acts[l];
            if let Some(g) = grads.as_deref_mut() {
                let gl = &mut g[l];
                for u in 0..layer.outputs {
                    gl.bias[u] += delta[u];
                    let row = &mut gl.weights[u * layer.inputs..(u + 1) * layer.inputs];
                    for (gw, a) in row.iter_mut().zip(input) {
                        *gw += delta[u] * a;
                    }
                }
            }
            let mut prev = vec![0.0; layer.inputs];
            for u in 0..layer.outputs {
                if delta[u] == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(layer.row(u)) {
                    *p += delta[u] * w;
                }
            }
            if l > 0 {
                offset -= layer.inputs;
                for (i, p) in prev.iter_mut().enumerate() {
                    let masked = masking.is_some_and(|m| m.absent[offset + i]);
                    if masked || input[i] <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        delta
    }

    pub fn to_json(&self) -> String {
        let doc = NetworkDoc {
            format: NETWORK_FORMAT.into(),
            version: NETWORK_VERSION,
            layer_sizes: self.layer_sizes(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerDoc {
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
            provenance: self.provenance.clone(),
            masked_players: self.masked_players.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("network serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let doc: NetworkDoc = serde_json::from_str(text).map_err(|e| ShapleyError::json(origin, e))?;
        if doc.format != NETWORK_FORMAT {
            return Err(ShapleyError::invalid("format", format!("{origin}: not a network document")));
        }
        if doc.version != NETWORK_VERSION {
            return Err(ShapleyError::VersionMismatch {
                format: NETWORK_FORMAT.into(),
                expected: NETWORK_VERSION,
                found: doc.version,
            });
        }
        if doc.layer_sizes.len() != doc.layers.len() + 1 {
            return Err(ShapleyError::invalid("layer_sizes", format!("{origin}: length mismatch")));
        }
        let layers = doc
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| Dense {
                inputs: doc.layer_sizes[i],
                outputs: doc.layer_sizes[i + 1],
                weights: l.weights,
                bias: l.bias,
            })
            .collect();
        let mut net = NeuronNetwork::new(layers)?;
        net.provenance = doc.provenance;
        if let Some(&bad) = doc.masked_players.iter().find(|&&p| p >= net.n_players()) {
            return Err(ShapleyError::PlayerOutOfRange {
                player: bad,
                n: net.n_players(),
            });
        }
        net.masked_players = doc.masked_players;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| ShapleyError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ShapleyError::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest entry, first on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NeuronNetwork {
        let l1 = Dense {
            inputs: 2,
            outputs: 3,
            weights: vec![1.0, -0.5, 0.3, 0.8, -1.2, 0.4],
            bias: vec![0.1, -0.2, 0.05],
        };
        let l2 = Dense {
            inputs: 3,
            outputs: 2,
            weights: vec![0.7, -0.3, 0.2, -0.4, 0.9, 0.5],
            bias: vec![0.0, 0.1],
        };
        NeuronNetwork::new(vec![l1, l2]).unwrap()
    }

    #[test]
    fn player_map_is_a_bijection() {
        let net = tiny();
        assert_eq!(net.n_players(), 3);
        for p in 0..3 {
            let (l, u) = net.player_unit(p);
            assert_eq!(net.player_index(l, u), p);
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let net = tiny();
        let x = [0.3, -0.7];
        let target = 1;
        let loss = |x: &[f64]| -net.probabilities(x, None)[target].ln();
        let trace = net.forward(&x, None);
        let mut d = softmax(&trace.logits);
        d[target] -= 1.0;
        let g = net.backward(&trace, &d, None, None);
        for i in 0..2 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        let net = tiny();
        let x = [0.9, 0.2];
        let target = 0;
        let trace = net.forward(&x, None);
        let mut d = softmax(&trace.logits);
        d[target] -= 1.0;
        let mut grads: Vec<Dense> = net.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();
        net.backward(&trace, &d, None, Some(&mut grads));
        for l in 0..2 {
            for w in 0..net.layers[l].weights.len() {
                let h = 1e-6;
                let mut np = net.clone();
                np.layers[l].weights[w] += h;
                let mut nm = net.clone();
                nm.layers[l].weights[w] -= h;
                let fd = (-np.probabilities(&x, None)[target].ln() + nm.probabilities(&x, None)[target].ln())
                    / (2.0 * h);
                assert!((fd - grads[l].weights[w]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut net = tiny();
        net.layers[0].weights[0] = 0.1 + 0.2;
        net.layers[1].bias[1] = 1.0 / 3.0;
        net.masked_players = vec![2];
        let text = net.to_json();
        let back = NeuronNetwork::from_json(&text, "mem").unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn rejects_future_version() {
        let text = tiny().to_json().replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(
            NeuronNetwork::from_json(&text, "mem"),
            Err(ShapleyError::VersionMismatch { found: 2, .. })
        ));
    }
}
