use std::any::Any;
use std::sync::Arc;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};
use crate::game::{Coalition, GameSpec, ValueOracle};
use crate::neuron::attack::AttackConfig;
use crate::neuron::data::GroupedDataset;
use crate::neuron::masks::{MaskFill, MeanMask};
use crate::neuron::metrics::{
    metric_accuracy, metric_adversarial, metric_class_recall, metric_group_fairness,
};
use crate::neuron::network::NeuronNetwork;
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Metric {
    Accuracy,
    ClassRecall {
        class: usize,
    },
    GroupFairness,
    Adversarial {
        #[serde(default)]
        attack: AttackConfig,
        /// Seed of the frozen per-example target classes.
        #[serde(default)]
        seed: u64,
    },
}

impl Metric {
    pub fn name(&self) -> String {
        match self {
            Metric::Accuracy => "accuracy".into(),
            Metric::ClassRecall { class } => format!("class_recall({class})"),
            Metric::GroupFairness => "group_fairness".into(),
            Metric::Adversarial { .. } => "adversarial".into(),
        }
    }
}

/// Coalition value = metric of the network with every non-member hidden
/// unit masked.
///
/// With a batch size set, each batch token selects a seeded sample of the
/// evaluation rows (one equal share per group for the fairness metric), so
/// a whole permutation walk scores the same examples.
pub struct NeuronGame {
    net: Arc<NeuronNetwork>,
    data: Arc<GroupedDataset>,
    fill: MeanMask,
    rows: Vec<usize>,
    metric: Metric,
    batch_size: Option<usize>,
}

impl NeuronGame {
    pub fn new(
        net: Arc<NeuronNetwork>,
        data: Arc<GroupedDataset>,
        mask: &MeanMask,
        rows: Vec<usize>,
        metric: Metric,
    ) -> Result<Self> {
        mask.check(&net)?;
        if data.dim != net.input_dim() || data.n_classes != net.n_classes() {
            return Err(ShapleyError::invalid(
                "game.bundle",
                "dataset shape does not match the network",
            ));
        }
        if let Some(&p) = net.masked_players.iter().find(|&&p| p >= net.n_players()) {
            return Err(ShapleyError::PlayerOutOfRange {
                player: p,
                n: net.n_players(),
            });
        }
        if rows.is_empty() {
            return Err(ShapleyError::EmptySet("evaluation set".into()));
        }
        let rows = match &metric {
            Metric::ClassRecall { class } => {
                if *class >= data.n_classes {
                    return Err(ShapleyError::invalid(
                        "game.metric.class",
                        format!("class {class} out of range for {} classes", data.n_classes),
                    ));
                }
                let r: Vec<usize> = rows.into_iter().filter(|&r| data.classes[r] == *class).collect();
                if r.is_empty() {
                    return Err(ShapleyError::EmptySet(format!("examples of class {class}")));
                }
                r
            }
            Metric::Adversarial { attack, .. } => {
                attack.validate()?;
                rows
            }
            _ => rows,
        };
        Ok(NeuronGame {
            fill: mask.clone(),
            net,
            data,
            rows,
            metric,
            batch_size: None,
        })
    }

    pub fn with_fill(mut self, fill: MaskFill) -> Self {
        if fill == MaskFill::Zero {
            self.fill = MeanMask::zeros(self.fill.len());
        }
        self
    }

    pub fn with_batch_size(mut self, batch_size: Option<usize>) -> Result<Self> {
        if let Some(b) = batch_size {
            let floor = match self.metric {
                Metric::GroupFairness => self.data.n_groups,
                _ => 1,
            };
            if b < floor {
                return Err(ShapleyError::invalid(
                    "game.batch_size",
                    format!("must be at least {floor}"),
                ));
            }
        }
        self.batch_size = batch_size.filter(|&b| b < self.rows.len());
        Ok(self)
    }

    pub fn into_spec(self) -> Result<GameSpec> {
        GameSpec::from_oracle(self)
    }

    pub fn network(&self) -> &NeuronNetwork {
        &self.net
    }

    pub fn data(&self) -> &GroupedDataset {
        &self.data
    }

    pub fn mask(&self) -> &MeanMask {
        &self.fill
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    /// Rows scored under a batch token.
    pub fn batch_rows(&self, batch: Option<u64>) -> Vec<usize> {
        let (Some(size), Some(token)) = (self.batch_size, batch) else {
            return self.rows.clone();
        };
        let mut rng = stream_rng(token, Stream::Game, 0);
        if let Metric::GroupFairness = self.metric {
            let g = self.data.n_groups;
            let mut out = Vec::with_capacity(size);
            for group in 0..g {
                let pool: Vec<usize> = self.rows.iter().copied().filter(|&r| self.data.groups[r] == group).collect();
                let take = (size / g).min(pool.len());
                out.extend(sample(&mut rng, pool.len(), take).into_iter().map(|i| pool[i]));
            }
            out.sort_unstable();
            out
        } else {
            let mut out: Vec<usize> = sample(&mut rng, self.rows.len(), size)
                .into_iter()
                .map(|i| self.rows[i])
                .collect();
            out.sort_unstable();
            out
        }
    }

    pub fn score(&self, absent: &[bool], rows: &[usize]) -> Result<f64> {
        let (net, fill, data) = (&*self.net, &self.fill, &*self.data);
        match &self.metric {
            Metric::Accuracy => metric_accuracy(net, fill, absent, data, rows),
            Metric::ClassRecall { class } => metric_class_recall(net, fill, absent, data, rows, *class),
            Metric::GroupFairness => metric_group_fairness(net, fill, absent, data, rows),
            Metric::Adversarial { attack, seed } => metric_adversarial(net, fill, absent, data, rows, attack, *seed),
        }
    }
}

impl ValueOracle for NeuronGame {
    fn n_players(&self) -> usize {
        self.net.n_players()
    }

    fn value(&self, coalition: &Coalition, batch: Option<u64>) -> Result<f64> {
        let absent: Vec<bool> = (0..self.n_players()).map(|i| !coalition.contains(i)).collect();
        self.score(&absent, &self.batch_rows(batch))
    }

    fn declared_range(&self) -> (f64, f64) {
        match self.metric {
            Metric::Adversarial { .. } => (-2.0, 2.0),
            _ => (-1.0, 1.0),
        }
    }

    fn batched(&self) -> bool {
        self.batch_size.is_some()
    }

    fn describe(&self) -> String {
        format!(
            "neuron(metric={}, players={}, rows={}, batch={})",
            self.metric.name(),
            self.n_players(),
            self.rows.len(),
            self.batch_size.map_or("all".to_string(), |b| b.to_string())
        )
    }

    fn labels(&self) -> Option<Vec<String>> {
        Some(self.net.player_labels())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::data::{generate_dataset, DatasetParams, Split};
    use crate::neuron::masks::compute_masks;
    use crate::neuron::train::init_network;

    fn game(metric: Metric) -> NeuronGame {
        let data = generate_dataset(&DatasetParams {
            n_examples: 160,
            ..Default::default()
        })
        .unwrap();
        let net = init_network(&[8, 5, 5, 4], 1).unwrap();
        let mask = compute_masks(&net, &data, &data.rows(Split::Fit), "fit").unwrap();
        let rows = data.rows(Split::EvalHoldout);
        NeuronGame::new(Arc::new(net), Arc::new(data), &mask, rows, metric).unwrap()
    }

    #[test]
    fn repeated_calls_agree() {
        let g = game(Metric::Adversarial {
            attack: AttackConfig {
                steps: 3,
                ..Default::default()
            },
            seed: 2,
        });
        let s = Coalition::from_members(10, [0, 3, 4, 8]).unwrap();
        assert_eq!(g.value(&s, None).unwrap(), g.value(&s, None).unwrap());
    }

    #[test]
    fn batches_are_seeded_and_stratified() {
        let g = game(Metric::GroupFairness).with_batch_size(Some(10)).unwrap();
        let a = g.batch_rows(Some(77));
        assert_eq!(a, g.batch_rows(Some(77)));
        assert_ne!(a, g.batch_rows(Some(78)));
        let g0 = a.iter().filter(|&&r| g.data().groups[r] == 0).count();
        assert_eq!((a.len(), g0), (10, 5));
        assert_eq!(g.batch_rows(None).len(), g.rows().len());
    }

    #[test]
    fn class_recall_keeps_only_that_class() {
        let g = game(Metric::ClassRecall { class: 1 });
        assert!(g.rows().iter().all(|&r| g.data().classes[r] == 1));
        let data = g.data().clone();
        let net = g.network().clone();
        let mask = g.mask().clone();
        let bad = NeuronGame::new(Arc::new(net), Arc::new(data), &mask, vec![0], Metric::ClassRecall { class: 9 });
        assert!(bad.is_err());
    }

    #[test]
    fn zero_fill_changes_values() {
        let g = game(Metric::Accuracy).with_fill(MaskFill::Zero);
        assert!(g.mask().means.iter().all(|&m| m == 0.0));
    }
}
