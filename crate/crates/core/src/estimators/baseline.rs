//! Cheap importance scores used as comparison points for Shapley rankings.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};
use crate::game::{Coalition, GameSpec};
use crate::neuron::data::Split;
use crate::neuron::game::NeuronGame;
use crate::neuron::network::Trace;
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineMethod {
    /// L2 norm of a unit's incoming weights and bias.
    WeightNorm,
    /// L2 norm of a unit's activations over the fit split.
    ResponseNorm,
    /// `V(N) − V(N ∖ {i})`.
    LeaveOneOut,
    Random { seed: u64 },
}

impl BaselineMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineMethod::WeightNorm => "weight_norm",
            BaselineMethod::ResponseNorm => "response_norm",
            BaselineMethod::LeaveOneOut => "leave_one_out",
            BaselineMethod::Random { .. } => "random",
        }
    }
}

fn neuron_game(game: &GameSpec, method: BaselineMethod) -> Result<&NeuronGame> {
    game.oracle()
        .as_any()
        .downcast_ref::<NeuronGame>()
        .ok_or_else(|| ShapleyError::MethodMismatch {
            method: method.name().into(),
            reason: format!("needs a neuron game, got {}", game.oracle().describe()),
        })
}

pub fn baseline_scores(game: &GameSpec, method: BaselineMethod) -> Result<Vec<f64>> {
    let n = game.n();
    match method {
        BaselineMethod::WeightNorm => {
            let net = neuron_game(game, method)?.network();
            Ok((0..n)
                .map(|p| {
                    let (l, u) = net.player_unit(p);
                    let layer = &net.layers[l];
                    let sq: f64 = layer.row(u).iter().map(|w| w * w).sum::<f64>() + layer.bias[u] * layer.bias[u];
                    sq.sqrt()
                })
                .collect())
        }
        BaselineMethod::ResponseNorm => {
            let ng = neuron_game(game, method)?;
            let (net, data) = (ng.network(), ng.data());
            let mut sq = vec![0.0; n];
            let mut trace = Trace::default();
            for r in data.rows(Split::Fit) {
                net.forward_into(data.row(r), None, &mut trace);
                for (s, a) in sq.iter_mut().zip(trace.acts[1..].iter().flatten()) {
                    *s += a * a;
                }
            }
            Ok(sq.into_iter().map(f64::sqrt).collect())
        }
        BaselineMethod::LeaveOneOut => {
            let full = Coalition::full(n);
            let v = game.evaluate(&full)?;
            (0..n).map(|i| Ok(v - game.evaluate(&full.without(i))?)).collect()
        }
        BaselineMethod::Random { seed } => {
            let mut rng = stream_rng(seed, Stream::Baseline, 0);
            Ok((0..n).map(|_| rng.random::<f64>()).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{make_additive, make_glove};

    #[test]
    fn leave_one_out_on_simple_games() {
        let g = make_additive(vec![0.2, -0.1, 0.4]).unwrap();
        let s = baseline_scores(&g, BaselineMethod::LeaveOneOut).unwrap();
        for (a, b) in s.iter().zip([0.2, -0.1, 0.4]) {
            assert!((a - b).abs() < 1e-15);
        }
        // V(N) = 1; dropping the left glove gives 0, dropping one right glove still 1.
        let g = make_glove(2).unwrap();
        assert_eq!(baseline_scores(&g, BaselineMethod::LeaveOneOut).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn network_methods_need_a_neuron_game() {
        let g = make_glove(2).unwrap();
        assert!(matches!(
            baseline_scores(&g, BaselineMethod::WeightNorm),
            Err(ShapleyError::MethodMismatch { .. })
        ));
    }

    #[test]
    fn random_is_seeded() {
        let g = make_glove(5).unwrap();
        let a = baseline_scores(&g, BaselineMethod::Random { seed: 3 }).unwrap();
        assert_eq!(a, baseline_scores(&g, BaselineMethod::Random { seed: 3 }).unwrap());
        assert_ne!(a, baseline_scores(&g, BaselineMethod::Random { seed: 4 }).unwrap());
    }
}
