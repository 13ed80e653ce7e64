//! Performance metrics of a network with some hidden units masked.
//!
//! `absent[i]` marks player `i` as removed. Players listed in the network's
//! own `masked_players` (a repaired model) are always absent on top of that.

use crate::error::{Result, ShapleyError};
use crate::neuron::attack::{pgd_attack, AttackConfig, AttackOutcome};
use crate::neuron::data::GroupedDataset;
use crate::neuron::masks::MeanMask;
use crate::neuron::network::{argmax, softmax, Masking, NeuronNetwork, Trace};

/// Absent flags after folding in the network's permanent masks.
pub fn effective_absent(net: &NeuronNetwork, mask: &MeanMask, absent: &[bool]) -> Result<Vec<bool>> {
    mask.check(net)?;
    if absent.len() != net.n_players() {
        return Err(ShapleyError::SizeMismatch {
            expected: net.n_players(),
            found: absent.len(),
        });
    }
    let mut out = absent.to_vec();
    for &p in &net.masked_players {
        out[p] = true;
    }
    Ok(out)
}

pub fn masked_forward(net: &NeuronNetwork, mask: &MeanMask, absent: &[bool], x: &[f64]) -> Result<Vec<f64>> {
    let absent = effective_absent(net, mask, absent)?;
    let m = Masking {
        fill: &mask.means,
        absent: &absent,
    };
    Ok(softmax(&net.forward(x, Some(m)).logits))
}

/// Predicted class of every row.
pub fn predictions(
    net: &NeuronNetwork,
    mask: &MeanMask,
    absent: &[bool],
    data: &GroupedDataset,
    rows: &[usize],
) -> Result<Vec<usize>> {
    let absent = effective_absent(net, mask, absent)?;
    let m = Masking {
        fill: &mask.means,
        absent: &absent,
    };
    let mut trace = Trace::default();
    Ok(rows
        .iter()
        .map(|&r| {
            net.forward_into(data.row(r), Some(m), &mut trace);
            argmax(&trace.logits)
        })
        .collect())
}

fn hit_rate(preds: &[usize], data: &GroupedDataset, rows: &[usize]) -> f64 {
    let hits = preds.iter().zip(rows).filter(|(&p, &r)| p == data.classes[r]).count();
    hits as f64 / rows.len() as f64
}

pub fn metric_accuracy(
    net: &NeuronNetwork,
    mask: &MeanMask,
    absent: &[bool],
    data: &GroupedDataset,
    rows: &[usize],
) -> Result<f64> {
    if rows.is_empty() {
        return Err(ShapleyError::EmptySet("evaluation set".into()));
    }
    let preds = predictions(net, mask, absent, data, rows)?;
    Ok(hit_rate(&preds, data, rows))
}

pub fn metric_class_recall(
    net: &NeuronNetwork,
    mask: &MeanMask,
    absent: &[bool],
    data: &GroupedDataset,
    rows: &[usize],
    class: usize,
) -> Result<f64> {
    let of_class: Vec<usize> = rows.iter().copied().filter(|&r| data.classes[r] == class).collect();
    if of_class.is_empty() {
        return Err(ShapleyError::EmptySet(format!("examples of class {class}")));
    }
    metric_accuracy(net, mask, absent, data, &of_class)
}

/// Accuracy of each group, in group order.
pub fn group_accuracies(
    net: &NeuronNetwork,
    mask: &MeanMask,
    absent: &[bool],
    data: &GroupedDataset,
    rows: &[usize],
) -> Result<Vec<f64>> {
    let preds = predictions(net, mask, absent, data, rows)?;
    let mut hits = vec![0usize; data.n_groups];
    let mut totals = vec![0usize; data.n_groups];
    for (&p, &r) in preds.iter().zip(rows) {
        let g = data.groups[r];
        totals[g] += 1;
        hits[g] += (p == data.classes[r]) as usize;
    }
    if let Some(g) = totals.iter().position(|&t| t == 0) {
        return Err(ShapleyError::EmptySet(format!("group {g} in the evaluation set")));
    }
    Ok(hits.iter().zip(&totals).map(|(&h, &t)| h as f64 / t as f64).collect())
}

/// Unweighted mean of the per-group accuracies.
pub fn metric_group_fairness(
    net: &NeuronNetwork,
    mask: &MeanMask,
    absent: &[bool],
    data: &GroupedDataset,
    rows: &[usize],
) -> Result<f64> {
    let acc = group_accuracies(net, mask, absent, data, rows)?;
    Ok(acc.iter().sum::<f64>() / acc.len() as f64)
}

/// Targeted attack against the masked model.
pub fn masked_attack(
    net: &NeuronNetwork,
    mask: &MeanMask,
    absent: &[bool],
    data: &GroupedDataset,
    rows: &[usize],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<AttackOutcome> {
    let absent = effective_absent(net, mask, absent)?;
    let m = Masking {
        fill: &mask.means,
        absent: &absent,
    };
    pgd_attack(net, Some(m), data, rows, cfg, seed)
}

/// Attack success rate minus clean accuracy, both on `rows` under the same
/// masking. Lies in `[-1, 1]`.
pub fn metric_adversarial(
    net: &NeuronNetwork,
    mask: &MeanMask,
    absent: &[bool],
    data: &GroupedDataset,
    rows: &[usize],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<f64> {
    let clean = metric_accuracy(net, mask, absent, data, rows)?;
    let attack = masked_attack(net, mask, absent, data, rows, cfg, seed)?;
    Ok(attack.success_rate() - clean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::data::{generate_dataset, DatasetParams, Split};
    use crate::neuron::masks::compute_masks;
    use crate::neuron::network::Dense;
    use crate::neuron::train::init_network;

    fn setup() -> (NeuronNetwork, MeanMask, GroupedDataset) {
        let data = generate_dataset(&DatasetParams {
            n_examples: 200,
            ..Default::default()
        })
        .unwrap();
        let net = init_network(&[8, 6, 5, 4], 11).unwrap();
        let mask = compute_masks(&net, &data, &data.rows(Split::Fit), "fit").unwrap();
        (net, mask, data)
    }

    #[test]
    fn nobody_absent_is_plain_forward() {
        let (net, mask, data) = setup();
        let none = vec![false; 11];
        for r in 0..10 {
            assert_eq!(
                masked_forward(&net, &mask, &none, data.row(r)).unwrap(),
                net.probabilities(data.row(r), None)
            );
        }
    }

    #[test]
    fn everyone_absent_gives_constant_output() {
        let (net, mask, data) = setup();
        let all = vec![true; 11];
        let p0 = masked_forward(&net, &mask, &all, data.row(0)).unwrap();
        for r in 1..30 {
            assert_eq!(masked_forward(&net, &mask, &all, data.row(r)).unwrap(), p0);
        }
        // Constant classifier: accuracy is the share of whatever class it picks,
        // recall is 1 on that class and 0 elsewhere.
        let rows = data.rows(Split::EvalHoldout);
        let c = argmax(&p0);
        let share = rows.iter().filter(|&&r| data.classes[r] == c).count() as f64 / rows.len() as f64;
        assert_eq!(metric_accuracy(&net, &mask, &all, &data, &rows).unwrap(), share);
        for k in 0..4 {
            let rec = metric_class_recall(&net, &mask, &all, &data, &rows, k).unwrap();
            assert_eq!(rec, if k == c { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn zero_weight_unit_is_invisible() {
        let (mut net, _, data) = setup();
        // Cut unit 2 of the first hidden layer off from the next layer.
        let next: &mut Dense = &mut net.layers[1];
        for u in 0..next.outputs {
            next.weights[u * next.inputs + 2] = 0.0;
        }
        let mask = compute_masks(&net, &data, &[0, 1, 2, 3], "r").unwrap();
        let none = vec![false; 11];
        let mut one = none.clone();
        one[2] = true;
        for r in 0..20 {
            assert_eq!(
                masked_forward(&net, &mask, &one, data.row(r)).unwrap(),
                masked_forward(&net, &mask, &none, data.row(r)).unwrap()
            );
        }
    }

    #[test]
    fn masking_is_order_free_and_idempotent() {
        let (net, mask, data) = setup();
        let mut a = vec![false; 11];
        a[1] = true;
        a[7] = true;
        let mut twice = net.clone();
        twice.masked_players = vec![7, 1, 7];
        let rows: Vec<usize> = (0..40).collect();
        let base = predictions(&net, &mask, &a, &data, &rows).unwrap();
        assert_eq!(predictions(&twice, &mask, &a, &data, &rows).unwrap(), base);
        assert_eq!(predictions(&twice, &mask, &[false; 11], &data, &rows).unwrap(), base);
    }

    #[test]
    fn single_class_recall_matches_accuracy() {
        let (net, mask, data) = setup();
        let rows: Vec<usize> = (0..200).filter(|&r| data.classes[r] == 2).collect();
        let none = vec![false; 11];
        assert_eq!(
            metric_class_recall(&net, &mask, &none, &data, &rows, 2).unwrap(),
            metric_accuracy(&net, &mask, &none, &data, &rows).unwrap()
        );
        assert!(metric_class_recall(&net, &mask, &none, &data, &rows, 1).is_err());
    }

    #[test]
    fn fairness_is_mean_of_group_accuracies() {
        let (net, mask, data) = setup();
        let rows = data.rows(Split::EvalHoldout);
        let none = vec![false; 11];
        let acc = group_accuracies(&net, &mask, &none, &data, &rows).unwrap();
        let f = metric_group_fairness(&net, &mask, &none, &data, &rows).unwrap();
        assert_eq!(f, (acc[0] + acc[1]) / 2.0);
        let only_g0: Vec<usize> = rows.iter().copied().filter(|&r| data.groups[r] == 0).collect();
        assert!(metric_group_fairness(&net, &mask, &none, &data, &only_g0).is_err());
    }

    #[test]
    fn empty_and_mismatched_inputs_fail() {
        let (net, mask, data) = setup();
        assert!(metric_accuracy(&net, &mask, &[false; 11], &data, &[]).is_err());
        assert!(metric_accuracy(&net, &mask, &[false; 3], &data, &[0]).is_err());
        let short = MeanMask::zeros(4);
        assert!(masked_forward(&net, &short, &[false; 11], data.row(0)).is_err());
    }

    #[test]
    fn adversarial_metric_is_deterministic() {
        let (net, mask, data) = setup();
        let rows: Vec<usize> = (0..30).collect();
        let cfg = AttackConfig::default();
        let none = vec![false; 11];
        let a = metric_adversarial(&net, &mask, &none, &data, &rows, &cfg, 5).unwrap();
        let b = metric_adversarial(&net, &mask, &none, &data, &rows, &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert!((-1.0..=1.0).contains(&a));
    }
}
