//! Model repair by permanently masking players picked from a Shapley result.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};
use crate::estimators::result::order_desc;
use crate::neuron::attack::AttackConfig;
use crate::neuron::fixture::Bundle;
use crate::neuron::metrics::{group_accuracies, masked_attack, metric_accuracy};
use crate::neuron::network::{Masking, NeuronNetwork};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairMode {
    /// Remove the players that hurt group-balanced accuracy the most.
    Fairness,
    /// Remove the players that help the attacker the most.
    Adversarial,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Count(usize),
    /// Fairness: every value below `v`. Adversarial: every value above `v`.
    Threshold(f64),
}

/// Players to mask, worst first.
pub fn select_players(values: &[f64], mode: RepairMode, selection: Selection) -> Result<Vec<usize>> {
    let order = match mode {
        RepairMode::Adversarial => order_desc(values),
        RepairMode::Fairness => {
            let neg: Vec<f64> = values.iter().map(|v| -v).collect();
            order_desc(&neg)
        }
    };
    Ok(match selection {
        Selection::Count(c) => {
            if c > values.len() {
                return Err(ShapleyError::invalid(
                    "repair.count",
                    format!("{c} exceeds the {} players", values.len()),
                ));
            }
            order[..c].to_vec()
        }
        Selection::Threshold(v) => order
            .into_iter()
            .filter(|&i| match mode {
                RepairMode::Fairness => values[i] < v,
                RepairMode::Adversarial => values[i] > v,
            })
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Snapshot {
    Fairness {
        fairness: f64,
        group_accuracies: Vec<f64>,
        worst_group_accuracy: f64,
        overall_accuracy: f64,
    },
    Adversarial {
        /// Success of the perturbations crafted against the original model.
        original_attack_success: f64,
        /// Success of a fresh attack against the model being measured.
        attack_success: f64,
        clean_accuracy: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub mode: RepairMode,
    pub masked: Vec<usize>,
    pub masked_labels: Vec<String>,
    pub before: Snapshot,
    pub after: Snapshot,
}

pub struct RepairOutcome {
    pub network: NeuronNetwork,
    pub report: RepairReport,
}

/// Masks `players` on top of whatever the bundle's network already masks
/// and measures the chosen metric family before and after on the
/// evaluation split.
pub fn repair(
    bundle: &Bundle,
    mode: RepairMode,
    players: &[usize],
    attack: &AttackConfig,
    attack_seed: u64,
) -> Result<RepairOutcome> {
    let n = bundle.n_players();
    if let Some(&p) = players.iter().find(|&&p| p >= n) {
        return Err(ShapleyError::PlayerOutOfRange { player: p, n });
    }
    let before_net: &NeuronNetwork = &bundle.net;
    let mut after_net = before_net.clone();
    for &p in players {
        if !after_net.masked_players.contains(&p) {
            after_net.masked_players.push(p);
        }
    }
    after_net.masked_players.sort_unstable();
    let rows = bundle.eval_rows();
    let none = vec![false; n];
    let masks = &bundle.masks;
    let (before, after) = match mode {
        RepairMode::Fairness => {
            let snap = |net: &NeuronNetwork| -> Result<Snapshot> {
                let groups = group_accuracies(net, masks, &none, &bundle.data, &rows)?;
                Ok(Snapshot::Fairness {
                    fairness: groups.iter().sum::<f64>() / groups.len() as f64,
                    worst_group_accuracy: groups.iter().copied().fold(f64::INFINITY, f64::min),
                    group_accuracies: groups,
                    overall_accuracy: metric_accuracy(net, masks, &none, &bundle.data, &rows)?,
                })
            };
            (snap(before_net)?, snap(&after_net)?)
        }
        RepairMode::Adversarial => {
            let original = masked_attack(before_net, masks, &none, &bundle.data, &rows, attack, attack_seed)?;
            let snap = |net: &NeuronNetwork| -> Result<Snapshot> {
                let fresh = masked_attack(net, masks, &none, &bundle.data, &rows, attack, attack_seed)?;
                let absent: Vec<bool> = (0..n).map(|p| net.masked_players.contains(&p)).collect();
                let m = Masking {
                    fill: &masks.means,
                    absent: &absent,
                };
                Ok(Snapshot::Adversarial {
                    original_attack_success: original.transfer_rate(net, Some(m)),
                    attack_success: fresh.success_rate(),
                    clean_accuracy: metric_accuracy(net, masks, &none, &bundle.data, &rows)?,
                })
            };
            (snap(before_net)?, snap(&after_net)?)
        }
    };
    let labels = before_net.player_labels();
    Ok(RepairOutcome {
        report: RepairReport {
            mode,
            masked: players.to_vec(),
            masked_labels: players.iter().map(|&p| labels[p].clone()).collect(),
            before,
            after,
        },
        network: after_net,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::fixture::FixtureKind;

    #[test]
    fn selection_orders() {
        let v = [0.3, -0.2, 0.0, -0.5, 0.1];
        assert_eq!(select_players(&v, RepairMode::Fairness, Selection::Count(2)).unwrap(), vec![3, 1]);
        assert_eq!(select_players(&v, RepairMode::Adversarial, Selection::Count(2)).unwrap(), vec![0, 4]);
        assert_eq!(
            select_players(&v, RepairMode::Fairness, Selection::Threshold(0.0)).unwrap(),
            vec![3, 1]
        );
        assert_eq!(
            select_players(&v, RepairMode::Adversarial, Selection::Threshold(0.05)).unwrap(),
            vec![0, 4]
        );
        assert!(select_players(&v, RepairMode::Fairness, Selection::Count(6)).is_err());
    }

    #[test]
    fn masking_nobody_changes_nothing() {
        let b = Bundle::generate(FixtureKind::Default, 0).unwrap();
        let attack = AttackConfig {
            steps: 5,
            ..AttackConfig::default()
        };
        for mode in [RepairMode::Fairness, RepairMode::Adversarial] {
            let out = repair(&b, mode, &[], &attack, 3).unwrap();
            assert_eq!(out.report.before, out.report.after);
            assert_eq!(out.network, *b.net);
        }
    }

    #[test]
    fn masked_players_accumulate() {
        let b = Bundle::generate(FixtureKind::Default, 0).unwrap();
        let out = repair(&b, RepairMode::Fairness, &[5, 2], &AttackConfig::default(), 0).unwrap();
        assert_eq!(out.network.masked_players, vec![2, 5]);
        assert_eq!(out.report.masked_labels, vec!["h1u5".to_string(), "h1u2".to_string()]);
        let again = repair(&b.with_network(out.network), RepairMode::Fairness, &[2, 9], &AttackConfig::default(), 0).unwrap();
        assert_eq!(again.network.masked_players, vec![2, 5, 9]);
        assert!(repair(&b, RepairMode::Fairness, &[32], &AttackConfig::default(), 0).is_err());
    }
}
