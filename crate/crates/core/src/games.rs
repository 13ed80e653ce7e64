//! Analytic cooperative games with known Shapley values. They serve as
//! fixtures for the exact oracles and as ground truth for the estimators.

use std::any::Any;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};
use crate::game::{Coalition, GameSpec, ValueOracle};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum AnalyticGame {
    /// One left-glove holder (player 0) and `n_right` right-glove holders.
    Glove { n_right: usize },
    WeightedVoting { quota: f64, weights: Vec<f64> },
    Additive { weights: Vec<f64> },
    Unanimity { n: usize, required: Vec<usize> },
    SparseSynthetic(SparseSynthetic),
}

impl AnalyticGame {
    pub fn validate(&self) -> Result<()> {
        match self {
            AnalyticGame::Glove { n_right } => {
                if *n_right == 0 {
                    return Err(ShapleyError::invalid("game.n_right", "must be at least 1"));
                }
            }
            AnalyticGame::WeightedVoting { quota, weights } => {
                if !(quota.is_finite() && *quota > 0.0) {
                    return Err(ShapleyError::invalid("game.quota", "must be positive"));
                }
                if weights.is_empty() {
                    return Err(ShapleyError::invalid("game.weights", "must be non-empty"));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(ShapleyError::invalid("game.weights", "must be finite and >= 0"));
                }
            }
            AnalyticGame::Additive { weights } => {
                if weights.is_empty() {
                    return Err(ShapleyError::invalid("game.weights", "must be non-empty"));
                }
                if weights.iter().any(|w| !w.is_finite()) {
                    return Err(ShapleyError::invalid("game.weights", "must be finite"));
                }
            }
            AnalyticGame::Unanimity { n, required } => {
                if *n == 0 {
                    return Err(ShapleyError::invalid("game.n", "must be at least 1"));
                }
                if required.is_empty() {
                    return Err(ShapleyError::invalid("game.required", "must be non-empty"));
                }
                if let Some(&bad) = required.iter().find(|&&i| i >= *n) {
                    return Err(ShapleyError::PlayerOutOfRange { player: bad, n: *n });
                }
            }
            AnalyticGame::SparseSynthetic(s) => {
                if s.weights.is_empty() {
                    return Err(ShapleyError::invalid("game.n", "must be at least 1"));
                }
            }
        }
        Ok(())
    }

    /// Closed-form Shapley vector where one exists.
    pub fn analytic_shapley(&self) -> Option<Vec<f64>> {
        match self {
            AnalyticGame::Glove { n_right } => {
                let r = *n_right as f64;
                let mut v = vec![1.0 / (r * (r + 1.0)); n_right + 1];
                v[0] = r / (r + 1.0);
                Some(v)
            }
            AnalyticGame::WeightedVoting { .. } => None,
            AnalyticGame::Additive { weights } => Some(weights.clone()),
            AnalyticGame::Unanimity { n, required } => {
                let mut req = required.clone();
                req.sort_unstable();
                req.dedup();
                let share = 1.0 / req.len() as f64;
                let mut v = vec![0.0; *n];
                for i in req {
                    v[i] = share;
                }
                Some(v)
            }
            AnalyticGame::SparseSynthetic(s) => Some(s.shapley()),
        }
    }
}

impl ValueOracle for AnalyticGame {
    fn n_players(&self) -> usize {
        match self {
            AnalyticGame::Glove { n_right } => n_right + 1,
            AnalyticGame::WeightedVoting { weights, .. } => weights.len(),
            AnalyticGame::Additive { weights } => weights.len(),
            AnalyticGame::Unanimity { n, .. } => *n,
            AnalyticGame::SparseSynthetic(s) => s.weights.len(),
        }
    }

    fn value(&self, s: &Coalition, _batch: Option<u64>) -> Result<f64> {
        Ok(match self {
            AnalyticGame::Glove { .. } => {
                if s.contains(0) && s.len() >= 2 {
                    1.0
                } else {
                    0.0
                }
            }
            AnalyticGame::WeightedVoting { quota, weights } => {
                let total: f64 = s.members().map(|i| weights[i]).sum();
                if total >= *quota {
                    1.0
                } else {
                    0.0
                }
            }
            AnalyticGame::Additive { weights } => s.members().map(|i| weights[i]).sum(),
            AnalyticGame::Unanimity { required, .. } => {
                if required.iter().all(|&i| s.contains(i)) {
                    1.0
                } else {
                    0.0
                }
            }
            AnalyticGame::SparseSynthetic(g) => g.value(s),
        })
    }

    fn describe(&self) -> String {
        match self {
            AnalyticGame::Glove { n_right } => format!("glove(n_right={n_right})"),
            AnalyticGame::WeightedVoting { quota, weights } => {
                format!("weighted_voting(quota={quota}, n={})", weights.len())
            }
            AnalyticGame::Additive { weights } => format!("additive(n={})", weights.len()),
            AnalyticGame::Unanimity { n, required } => {
                format!("unanimity(n={n}, required={required:?})")
            }
            AnalyticGame::SparseSynthetic(s) => format!(
                "sparse_synthetic(n={}, k_hot={}, seed={})",
                s.weights.len(),
                s.designated.len(),
                s.seed
            ),
        }
    }

    fn labels(&self) -> Option<Vec<String>> {
        match self {
            AnalyticGame::Glove { n_right } => {
                let mut l = vec!["left".to_string()];
                l.extend((1..=*n_right).map(|j| format!("right{j}")));
                Some(l)
            }
            _ => None,
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

fn analytic(game: AnalyticGame) -> Result<GameSpec> {
    game.validate()?;
    GameSpec::from_oracle(game)
}

pub fn make_glove(n_right: usize) -> Result<GameSpec> {
    analytic(AnalyticGame::Glove { n_right })
}

pub fn make_weighted_voting(quota: f64, weights: Vec<f64>) -> Result<GameSpec> {
    analytic(AnalyticGame::WeightedVoting { quota, weights })
}

pub fn make_additive(weights: Vec<f64>) -> Result<GameSpec> {
    analytic(AnalyticGame::Additive { weights })
}

pub fn make_unanimity(n: usize, required: Vec<usize>) -> Result<GameSpec> {
    analytic(AnalyticGame::Unanimity { n, required })
}

pub fn make_sparse_synthetic(n: usize, k_hot: usize, seed: u64) -> Result<GameSpec> {
    let g = SparseSynthetic::new(n, k_hot, seed, SparseParams::default())?;
    analytic(AnalyticGame::SparseSynthetic(g))
}

/// Shape parameters of the sparse synthetic game.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseParams {
    /// Minimum Shapley separation between a designated player and any other.
    pub gap: f64,
    /// Non-designated weights are uniform on `[0, gap * noise_fraction]`.
    pub noise_fraction: f64,
    /// Bonus earned by each adjacent pair of designated players when both
    /// are present.
    pub interaction: f64,
}

impl Default for SparseParams {
    fn default() -> Self {
        SparseParams {
            gap: 0.06,
            noise_fraction: 0.1,
            interaction: 0.015,
        }
    }
}

/// Additive game with a few heavy players plus a pairwise bonus along a
/// chain of the heavy players, so leave-one-out and Shapley disagree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseSynthetic {
    pub seed: u64,
    pub params: SparseParams,
    pub weights: Vec<f64>,
    /// Designated players in chain order; consecutive entries interact.
    pub designated: Vec<usize>,
}

impl SparseSynthetic {
    pub fn new(n: usize, k_hot: usize, seed: u64, params: SparseParams) -> Result<Self> {
        if n == 0 {
            return Err(ShapleyError::invalid("game.n", "must be at least 1"));
        }
        if k_hot == 0 || k_hot > n {
            return Err(ShapleyError::invalid(
                "game.k_hot",
                format!("must satisfy 1 <= k_hot <= n = {n}"),
            ));
        }
        if !(params.gap > 0.0 && params.noise_fraction >= 0.0 && params.interaction >= 0.0) {
            return Err(ShapleyError::invalid("game.gap", "gap must be > 0, noise and interaction >= 0"));
        }
        let mut rng = stream_rng(seed, Stream::Game, 0);
        let mut order: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let designated: Vec<usize> = order[..k_hot].to_vec();
        let noise_max = params.gap * params.noise_fraction;
        let mut weights = vec![0.0; n];
        for w in weights.iter_mut() {
            *w = noise_max * rng.random::<f64>();
        }
        for &d in &designated {
            weights[d] = noise_max + params.gap + 0.5 * params.gap * rng.random::<f64>();
        }
        Ok(SparseSynthetic {
            seed,
            params,
            weights,
            designated,
        })
    }

    pub fn value(&self, s: &Coalition) -> f64 {
        let base: f64 = s.members().map(|i| self.weights[i]).sum();
        let bonus = self
            .designated
            .windows(2)
            .filter(|w| s.contains(w[0]) && s.contains(w[1]))
            .count() as f64;
        base + self.params.interaction * bonus
    }

    /// Each chain pair splits its bonus evenly between its two members.
    pub fn shapley(&self) -> Vec<f64> {
        let mut phi = self.weights.clone();
        for w in self.designated.windows(2) {
            phi[w[0]] += 0.5 * self.params.interaction;
            phi[w[1]] += 0.5 * self.params.interaction;
        }
        phi
    }

    pub fn top_set(&self) -> Vec<usize> {
        let mut d = self.designated.clone();
        d.sort_unstable();
        d
    }
}

/// A game given by an explicit table of `2^n` coalition values, indexed by
/// the member bit mask.
#[derive(Clone, Debug, PartialEq)]
pub struct TableGame {
    n: usize,
    values: Vec<f64>,
}

impl TableGame {
    pub const MAX_PLAYERS: usize = 16;

    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || n > Self::MAX_PLAYERS {
            return Err(ShapleyError::TooManyPlayers {
                what: "table game",
                n,
                cap: Self::MAX_PLAYERS,
            });
        }
        if values.len() != 1 << n {
            return Err(ShapleyError::invalid(
                "game.values",
                format!("expected {} entries, found {}", 1usize << n, values.len()),
            ));
        }
        Ok(TableGame { n, values })
    }

    pub fn from_fn(n: usize, f: impl Fn(u64) -> f64) -> Result<Self> {
        Self::new(n, (0..1u64 << n).map(f).collect())
    }

    /// Uniform random scores in `[0, 1)`, seeded.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, Stream::Game, 1);
        let values = (0..1usize << n).map(|_| rng.random::<f64>()).collect();
        TableGame { n, values }
    }

    pub fn value_of_mask(&self, mask: u64) -> f64 {
        self.values[mask as usize]
    }

    pub fn plus(&self, other: &TableGame) -> Result<TableGame> {
        if self.n != other.n {
            return Err(ShapleyError::SizeMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(TableGame {
            n: self.n,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }
}

impl ValueOracle for TableGame {
    fn n_players(&self) -> usize {
        self.n
    }

    fn value(&self, s: &Coalition, _batch: Option<u64>) -> Result<f64> {
        let mask = s.members().fold(0u64, |m, i| m | (1 << i));
        Ok(self.values[mask as usize])
    }

    fn describe(&self) -> String {
        format!("table(n={})", self.n)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glove_endpoints() {
        let g = make_glove(2).unwrap();
        assert_eq!(g.evaluate(&Coalition::empty(3)).unwrap(), 0.0);
        assert_eq!(g.evaluate(&Coalition::full(3)).unwrap(), 1.0);
        assert_eq!(g.players().label(0), "left");
    }

    #[test]
    fn glove_closed_form() {
        let v = AnalyticGame::Glove { n_right: 2 }.analytic_shapley().unwrap();
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((v[1] - 1.0 / 6.0).abs() < 1e-15);
        let v = AnalyticGame::Glove { n_right: 1 }.analytic_shapley().unwrap();
        assert_eq!(v, vec![0.5, 0.5]);
    }

    #[test]
    fn voting_rule() {
        let g = make_weighted_voting(51.0, vec![49.0, 49.0, 2.0]).unwrap();
        assert_eq!(g.evaluate(&Coalition::from_members(3, [0, 2]).unwrap()).unwrap(), 1.0);
        assert_eq!(g.evaluate(&Coalition::from_members(3, [0]).unwrap()).unwrap(), 0.0);
        assert!(make_weighted_voting(0.0, vec![1.0]).is_err());
    }

    #[test]
    fn monotone_by_construction() {
        let games = [
            make_glove(3).unwrap(),
            make_weighted_voting(51.0, vec![49.0, 49.0, 2.0, 10.0]).unwrap(),
        ];
        for g in &games {
            let n = g.n();
            for s in 0..1u64 << n {
                for t in 0..1u64 << n {
                    if s & t == s {
                        let vs = g.evaluate(&Coalition::from_mask(n, s)).unwrap();
                        let vt = g.evaluate(&Coalition::from_mask(n, t)).unwrap();
                        assert!(vs <= vt);
                    }
                }
            }
        }
    }

    #[test]
    fn sparse_designated_are_separated() {
        let s = SparseSynthetic::new(50, 5, 7, SparseParams::default()).unwrap();
        let phi = s.shapley();
        let top = s.top_set();
        let min_hot = top.iter().map(|&i| phi[i]).fold(f64::INFINITY, f64::min);
        let max_cold = (0..50)
            .filter(|i| !top.contains(i))
            .map(|i| phi[i])
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(min_hot - max_cold >= s.params.gap);
    }

    #[test]
    fn sparse_zero_noise_cold_players_are_their_weights() {
        let params = SparseParams {
            noise_fraction: 0.0,
            ..SparseParams::default()
        };
        let s = SparseSynthetic::new(3, 1, 3, params).unwrap();
        let phi = s.shapley();
        for i in 0..3 {
            if !s.designated.contains(&i) {
                assert_eq!(phi[i], 0.0);
                assert_eq!(phi[i], s.weights[i]);
            }
        }
    }

    #[test]
    fn sparse_rejects_bad_k() {
        assert!(make_sparse_synthetic(5, 0, 1).is_err());
        assert!(make_sparse_synthetic(5, 6, 1).is_err());
        assert!(make_sparse_synthetic(5, 5, 1).is_ok());
    }

    #[test]
    fn table_plus_is_pointwise() {
        let a = TableGame::random(3, 1);
        let b = TableGame::random(3, 2);
        let c = a.plus(&b).unwrap();
        for m in 0..8 {
            assert_eq!(c.value_of_mask(m), a.value_of_mask(m) + b.value_of_mask(m));
        }
    }
}
