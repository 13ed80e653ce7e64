//! Permutation-sampling estimators: plain Monte Carlo, truncated Monte
//! Carlo, and the truncated multi-armed-bandit top-k search, plus the
//! cheap comparison baselines.

pub mod baseline;
pub mod config;
pub mod engine;
pub mod result;
pub mod stats;
pub mod walk;

pub use baseline::{baseline_scores, BaselineMethod};
pub use config::EstimatorConfig;
pub use engine::{Convergence, Estimator, EstimatorState, Method, PlayerState};
pub use result::{PlayerRecord, RunInfo, RunStatus, SeedInfo, ShapleyResult};
pub use stats::{bernstein_bounds, bernstein_half_width, spearman, Interval, RunningStats};

use crate::error::{Result, ShapleyError};
use crate::game::GameSpec;

/// Monte Carlo over uniformly random permutations, measuring every player.
pub fn mc_shapley(game: &GameSpec, config: &EstimatorConfig, convergence: Convergence) -> Result<ShapleyResult> {
    Estimator::new(game, Method::Mc { convergence }, config.clone())?.run(game)
}

/// Monte Carlo with early truncation at `config.truncation`.
pub fn truncated_mc_shapley(
    game: &GameSpec,
    config: &EstimatorConfig,
    convergence: Convergence,
) -> Result<ShapleyResult> {
    if config.truncation.is_none() {
        return Err(ShapleyError::invalid(
            "estimator.truncation",
            "truncated Monte Carlo needs a threshold",
        ));
    }
    Estimator::new(game, Method::TruncatedMc { convergence }, config.clone())?.run(game)
}

/// Truncated multi-armed-bandit search for the top-k players.
pub fn tmab_shapley(game: &GameSpec, config: &EstimatorConfig) -> Result<ShapleyResult> {
    Estimator::new(game, Method::Tmab, config.clone())?.run(game)
}

#[cfg(test)]
mod tests;
