use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};

/// Inputs shared by every sampling estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Failure probability of each confidence bound.
    pub delta: f64,
    /// Absolute tolerance, in units of the value function.
    pub epsilon: f64,
    /// Number of top players to identify.
    pub k: usize,
    /// Chain value below which the rest of a walk is frozen; `None` is off.
    pub truncation: Option<f64>,
    pub max_iterations: u64,
    pub seed: u64,
    /// Players eligible for the active set (all players when `None`).
    pub candidates: Option<Vec<usize>>,
    /// Range `R` of a single marginal contribution.
    pub range: f64,
    /// Divide `delta` by the number of players.
    pub bonferroni: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            delta: 0.05,
            epsilon: 1e-3,
            k: 1,
            truncation: None,
            max_iterations: 100_000,
            seed: 0,
            candidates: None,
            range: 1.0,
            bonferroni: false,
        }
    }
}

impl EstimatorConfig {
    pub fn with_seed(seed: u64) -> Self {
        EstimatorConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ShapleyError::invalid("estimator.delta", "must lie in (0, 1)"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(ShapleyError::invalid("estimator.epsilon", "must be finite and >= 0"));
        }
        if self.max_iterations == 0 {
            return Err(ShapleyError::invalid("estimator.max_iterations", "must be at least 1"));
        }
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err(ShapleyError::invalid("estimator.range", "must be positive"));
        }
        if let Some(vt) = self.truncation {
            if vt.is_nan() {
                return Err(ShapleyError::invalid("estimator.truncation", "must be a number"));
            }
        }
        let eligible = match &self.candidates {
            Some(c) => {
                if let Some(&bad) = c.iter().find(|&&i| i >= n) {
                    return Err(ShapleyError::invalid(
                        "estimator.candidates",
                        format!("player {bad} out of range for {n} players"),
                    ));
                }
                let mut c = c.clone();
                c.sort_unstable();
                c.dedup();
                c.len()
            }
            None => n,
        };
        if self.k == 0 || self.k > eligible {
            return Err(ShapleyError::invalid(
                "estimator.k",
                format!("k = {} must satisfy 1 <= k <= {eligible}", self.k),
            ));
        }
        Ok(())
    }

    pub fn effective_delta(&self, n: usize) -> f64 {
        if self.bonferroni {
            self.delta / n as f64
        } else {
            self.delta
        }
    }

    pub fn candidate_mask(&self, n: usize) -> Vec<bool> {
        match &self.candidates {
            None => vec![true; n],
            Some(c) => {
                let mut m = vec![false; n];
                for &i in c {
                    m[i] = true;
                }
                m
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_above_n_names_k() {
        let cfg = EstimatorConfig {
            k: 4,
            ..Default::default()
        };
        let err = cfg.validate(3).unwrap_err();
        assert!(err.to_string().contains("estimator.k"), "{err}");
    }

    #[test]
    fn k_bounded_by_candidates() {
        let cfg = EstimatorConfig {
            k: 3,
            candidates: Some(vec![0, 1]),
            ..Default::default()
        };
        assert!(cfg.validate(5).is_err());
    }

    #[test]
    fn delta_bounds() {
        for d in [0.0, 1.0, -0.1] {
            let cfg = EstimatorConfig {
                delta: d,
                ..Default::default()
            };
            assert!(cfg.validate(3).is_err());
        }
    }
}
