//! Targeted L∞ projected gradient descent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};
use crate::neuron::data::GroupedDataset;
use crate::neuron::network::{argmax, softmax, Masking, NeuronNetwork, Trace};
use crate::rng::{stream_rng, Stream};

/// PGD parameters. The norm is always L∞ and every example is pushed toward
/// a randomly assigned wrong class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    /// Start from a uniform point in the ball instead of the clean input.
    pub random_start: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        // Steps are a twentieth of the radius.
        AttackConfig {
            epsilon: 2.0,
            steps: 30,
            step_size: 0.1,
            random_start: false,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(ShapleyError::invalid("attack.epsilon", "must be finite and >= 0"));
        }
        if self.steps == 0 {
            return Err(ShapleyError::invalid("attack.steps", "must be at least 1"));
        }
        if !(self.step_size > 0.0) {
            return Err(ShapleyError::invalid("attack.step_size", "must be positive"));
        }
        Ok(())
    }
}

/// Target class of example `row`: uniform over the classes other than its label.
pub fn target_for(data: &GroupedDataset, row: usize, seed: u64) -> usize {
    let label = data.classes[row];
    let t = stream_rng(seed, Stream::Target, row as u64).random_range(0..data.n_classes - 1);
    if t >= label {
        t + 1
    } else {
        t
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    pub rows: Vec<usize>,
    pub perturbed: Vec<Vec<f64>>,
    pub targets: Vec<usize>,
    pub success: Vec<bool>,
}

impl AttackOutcome {
    pub fn success_rate(&self) -> f64 {
        self.success.iter().filter(|&&s| s).count() as f64 / self.success.len().max(1) as f64
    }

    /// Success rate of these fixed perturbations against another model.
    pub fn transfer_rate(&self, net: &NeuronNetwork, masking: Option<Masking<'_>>) -> f64 {
        let mut trace = Trace::default();
        let hits = self
            .perturbed
            .iter()
            .zip(&self.targets)
            .filter(|(x, &t)| {
                net.forward_into(x, masking, &mut trace);
                argmax(&trace.logits) == t
            })
            .count();
        hits as f64 / self.perturbed.len().max(1) as f64
    }
}

pub fn pgd_attack(
    net: &NeuronNetwork,
    masking: Option<Masking<'_>>,
    data: &GroupedDataset,
    rows: &[usize],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    if data.n_classes < 2 {
        return Err(ShapleyError::invalid("data.n_classes", "targeted attack needs 2+ classes"));
    }
    let mut trace = Trace::default();
    let mut out = AttackOutcome {
        rows: rows.to_vec(),
        perturbed: Vec::with_capacity(rows.len()),
        targets: Vec::with_capacity(rows.len()),
        success: Vec::with_capacity(rows.len()),
    };
    for &r in rows {
        let x0 = data.row(r);
        let target = target_for(data, r, seed);
        let mut x = x0.to_vec();
        if cfg.random_start && cfg.epsilon > 0.0 {
            let mut rng = stream_rng(seed, Stream::AttackStart, r as u64);
            for v in x.iter_mut() {
                *v += rng.random_range(-cfg.epsilon..=cfg.epsilon);
            }
        }
        for _ in 0..cfg.steps {
            net.forward_into(&x, masking, &mut trace);
            let mut d = softmax(&trace.logits);
            d[target] -= 1.0;
            let g = net.backward(&trace, &d, masking, None);
            for ((v, g), o) in x.iter_mut().zip(&g).zip(x0) {
                // Descend the targeted loss, then project onto the ball.
                let step = if *g > 0.0 {
                    -cfg.step_size
                } else if *g < 0.0 {
                    cfg.step_size
                } else {
                    0.0
                };
                *v = (*v + step).clamp(o - cfg.epsilon, o + cfg.epsilon);
            }
        }
        net.forward_into(&x, masking, &mut trace);
        out.success.push(argmax(&trace.logits) == target);
        out.targets.push(target);
        out.perturbed.push(x);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::data::{generate_dataset, DatasetParams};
    use crate::neuron::train::init_network;

    fn setup() -> (NeuronNetwork, GroupedDataset) {
        let data = generate_dataset(&DatasetParams {
            n_examples: 80,
            ..Default::default()
        })
        .unwrap();
        (init_network(&[8, 6, 6, 4], 3).unwrap(), data)
    }

    #[test]
    fn targets_never_hit_the_label() {
        let (_, data) = setup();
        let mut seen = [0usize; 4];
        for r in 0..data.len() {
            let t = target_for(&data, r, 1);
            assert_ne!(t, data.classes[r]);
            seen[t] += 1;
            assert_eq!(t, target_for(&data, r, 1));
        }
        assert!(seen.iter().all(|&s| s > 0));
    }

    #[test]
    fn zero_radius_leaves_inputs_alone() {
        let (net, data) = setup();
        let rows: Vec<usize> = (0..20).collect();
        let cfg = AttackConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        let out = pgd_attack(&net, None, &data, &rows, &cfg, 4).unwrap();
        for (i, &r) in rows.iter().enumerate() {
            assert_eq!(out.perturbed[i], data.row(r));
            let pred = argmax(&net.forward(data.row(r), None).logits);
            assert_eq!(out.success[i], pred == out.targets[i]);
        }
    }

    #[test]
    fn perturbations_stay_in_the_ball() {
        let (net, data) = setup();
        let rows: Vec<usize> = (0..40).collect();
        for random_start in [false, true] {
            let cfg = AttackConfig {
                epsilon: 0.3,
                steps: 12,
                step_size: 0.1,
                random_start,
            };
            let out = pgd_attack(&net, None, &data, &rows, &cfg, 9).unwrap();
            for (x, &r) in out.perturbed.iter().zip(&rows) {
                let d = x.iter().zip(data.row(r)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(d <= 0.3 + 1e-12, "{d}");
            }
        }
    }

    #[test]
    fn bad_configs_rejected() {
        for cfg in [
            AttackConfig { steps: 0, ..Default::default() },
            AttackConfig { step_size: 0.0, ..Default::default() },
            AttackConfig { epsilon: -1.0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
