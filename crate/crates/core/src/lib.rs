//! Shapley-value attribution for cooperative games, with permutation
//! sampling estimators, a bandit-style top-k search, and a small neural
//! network whose hidden units can be scored as players.

pub mod error;
pub mod estimators;
pub mod exact;
pub mod game;
pub mod games;
pub mod neuron;
pub mod rng;
pub mod runner;

pub use error::{Result, ShapleyError};
pub use estimators::{
    baseline_scores, mc_shapley, tmab_shapley, truncated_mc_shapley, BaselineMethod, Convergence,
    Estimator, EstimatorConfig, Method, RunStatus, ShapleyResult,
};
pub use exact::{shapley_by_permutations, shapley_by_subsets};
pub use game::{CachePolicy, Coalition, GameSpec, PlayerSet, ValueOracle};
pub use games::{
    make_additive, make_glove, make_sparse_synthetic, make_unanimity, make_weighted_voting,
    AnalyticGame, TableGame,
};
pub use runner::{run_job, run_with_game, EstimatorChoice, ExactRoute, GameBinding, JobSpec};
