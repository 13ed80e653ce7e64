//! Shared driver for the permutation estimators.
//!
//! An [`Estimator`] owns the per-player statistics and the active set. It
//! hands out [`WalkPlan`]s, and folds [`WalkOutcome`]s back in. The walk
//! itself is a pure function of the plan and the game, so the same driver
//! serves the single-threaded entry points and the parallel runner.

use std::sync::Arc;
use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};
use crate::estimators::config::EstimatorConfig;
use crate::estimators::result::{
    order_desc, ranks, PlayerRecord, RunInfo, RunStatus, SeedInfo, ShapleyResult,
};
use crate::estimators::stats::{bernstein_bounds, bernstein_half_width, RunningStats};
use crate::estimators::walk::{execute_walk, WalkOutcome, WalkPlan};
use crate::game::GameSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    FixedIterations(u64),
    BernsteinAllPlayers,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Mc { convergence: Convergence },
    TruncatedMc { convergence: Convergence },
    Tmab,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Mc { .. } => "mc",
            Method::TruncatedMc { .. } => "truncated_mc",
            Method::Tmab => "tmab",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlayerState {
    pub stats: RunningStats,
    pub lb: Option<f64>,
    pub ub: Option<f64>,
    pub evals: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub players: Vec<PlayerState>,
    pub active: Vec<bool>,
    /// Merged walks.
    pub iteration: u64,
    /// Next walk index to hand out.
    pub next_walk: u64,
    pub truncation_hits: u64,
    pub full_value: RunningStats,
    pub empty_value: RunningStats,
    pub range: f64,
    pub grand_evals: u64,
    pub status: Option<RunStatus>,
}

pub struct Estimator {
    method: Method,
    config: EstimatorConfig,
    n: usize,
    delta: f64,
    candidates: Vec<bool>,
    batched: bool,
    state: EstimatorState,
}

impl Estimator {
    pub fn new(game: &GameSpec, method: Method, config: EstimatorConfig) -> Result<Self> {
        let n = game.n();
        config.validate(n)?;
        if let Method::TruncatedMc { .. } = method {
            if config.truncation.is_none() {
                return Err(ShapleyError::invalid(
                    "estimator.truncation",
                    "truncated Monte Carlo needs a threshold",
                ));
            }
        }
        let candidates = config.candidate_mask(n);
        let active = match method {
            Method::Tmab => candidates.clone(),
            _ => vec![true; n],
        };
        let state = EstimatorState {
            players: vec![PlayerState::default(); n],
            active,
            iteration: 0,
            next_walk: 0,
            truncation_hits: 0,
            full_value: RunningStats::default(),
            empty_value: RunningStats::default(),
            range: config.range,
            grand_evals: 0,
            status: None,
        };
        Ok(Estimator {
            method,
            delta: config.effective_delta(n),
            config,
            n,
            candidates,
            batched: game.batched(),
            state,
        })
    }

    pub fn resume(
        game: &GameSpec,
        method: Method,
        config: EstimatorConfig,
        state: EstimatorState,
    ) -> Result<Self> {
        let mut e = Self::new(game, method, config)?;
        if state.players.len() != e.n || state.active.len() != e.n {
            return Err(ShapleyError::SizeMismatch {
                expected: e.n,
                found: state.players.len(),
            });
        }
        e.state = state;
        e.state.status = None;
        Ok(e)
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn state(&self) -> &EstimatorState {
        &self.state
    }

    fn truncation(&self) -> Option<f64> {
        match self.method {
            Method::Mc { .. } => None,
            _ => self.config.truncation,
        }
    }

    /// Plans the next walk against the current active set.
    pub fn plan(&mut self) -> WalkPlan {
        let active = match self.method {
            Method::Tmab => Some(Arc::new(self.state.active.clone())),
            _ => None,
        };
        let plan = WalkPlan::new(
            self.n,
            self.config.seed,
            self.state.next_walk,
            self.batched,
            active,
            self.truncation(),
        );
        self.state.next_walk += 1;
        plan
    }

    /// Folds a walk into the statistics and recomputes the active set.
    ///
    /// Samples for players that have left the active set since the walk was
    /// planned are dropped, so a deactivated player's statistics stay fixed.
    pub fn merge(&mut self, out: &WalkOutcome) {
        let tmab = matches!(self.method, Method::Tmab);
        for s in &out.samples {
            let p = &mut self.state.players[s.player];
            p.evals += s.evals as u64;
            if tmab && !self.state.active[s.player] {
                continue;
            }
            if s.marginal.abs() > self.state.range {
                warn!(
                    "marginal {} of player {} exceeds range {}; widening",
                    s.marginal, s.player, self.state.range
                );
                self.state.range = s.marginal.abs();
            }
            p.stats.push(s.marginal);
            let iv = bernstein_bounds(
                p.stats.mean,
                p.stats.variance(),
                p.stats.count,
                self.delta,
                self.state.range,
            )
            .expect("validated delta and range");
            if p.stats.count >= 2 {
                p.lb = Some(iv.lower);
                p.ub = Some(iv.upper);
            }
        }
        self.state.grand_evals += out.grand_evals as u64;
        self.state.full_value.push(out.v_full);
        if let Some(e) = out.v_empty {
            self.state.empty_value.push(e);
        }
        if out.truncated {
            self.state.truncation_hits += 1;
        }
        self.state.iteration += 1;
        if tmab {
            self.update_active();
        }
    }

    /// Books the oracle calls of a walk that will not be merged, so per-player
    /// accounting still adds up to the game's counter.
    pub fn absorb_evals(&mut self, out: &WalkOutcome) {
        for s in &out.samples {
            self.state.players[s.player].evals += s.evals as u64;
        }
        self.state.grand_evals += out.grand_evals as u64;
    }

    /// The k-th largest current estimate among candidate players.
    pub fn pivot(&self) -> f64 {
        let means: Vec<f64> = self
            .state
            .players
            .iter()
            .map(|p| p.stats.mean)
            .collect();
        order_desc(&means)
            .into_iter()
            .filter(|&i| self.candidates[i])
            .nth(self.config.k - 1)
            .map(|i| means[i])
            .expect("k validated against candidates")
    }

    fn update_active(&mut self) {
        let pivot = self.pivot();
        let eps = self.config.epsilon;
        for i in 0..self.n {
            let p = &self.state.players[i];
            self.state.active[i] = self.candidates[i]
                && match (p.stats.count, p.lb, p.ub) {
                    (c, Some(lb), Some(ub)) if c >= 2 => lb + eps < pivot && pivot < ub - eps,
                    _ => true,
                };
        }
    }

    pub fn half_width(&self, i: usize) -> f64 {
        let p = &self.state.players[i].stats;
        bernstein_half_width(p.variance(), p.count, self.delta, self.state.range)
    }

    /// Stopping rule; `None` while the run should continue.
    pub fn check_done(&self) -> Option<RunStatus> {
        let it = self.state.iteration;
        let capped = it >= self.config.max_iterations;
        match self.method {
            Method::Mc { convergence } | Method::TruncatedMc { convergence } => match convergence {
                Convergence::FixedIterations(m) => (it >= m).then_some(RunStatus::Converged),
                Convergence::BernsteinAllPlayers => {
                    if it > 0 && (0..self.n).all(|i| self.half_width(i) <= self.config.epsilon) {
                        Some(RunStatus::Converged)
                    } else {
                        capped.then_some(RunStatus::IterationCapped)
                    }
                }
            },
            Method::Tmab => {
                if it > 0 && !self.state.active.iter().any(|&a| a) {
                    Some(RunStatus::Converged)
                } else {
                    capped.then_some(RunStatus::IterationCapped)
                }
            }
        }
    }

    pub fn mark(&mut self, status: RunStatus) {
        self.state.status = Some(status);
    }

    pub fn step(&mut self, game: &GameSpec) -> Result<()> {
        let plan = self.plan();
        let out = execute_walk(game, &plan)?;
        self.merge(&out);
        Ok(())
    }

    /// Runs single-threaded to completion. Bit-reproducible under a seed.
    pub fn run(mut self, game: &GameSpec) -> Result<ShapleyResult> {
        self.run_observed(game, |_| {})
    }

    /// Like [`Estimator::run`], calling `observe` after every merged walk.
    pub fn run_observed(
        &mut self,
        game: &GameSpec,
        mut observe: impl FnMut(&Estimator),
    ) -> Result<ShapleyResult> {
        let start = Instant::now();
        let status = loop {
            if let Some(s) = self.check_done() {
                break s;
            }
            self.step(game)?;
            observe(self);
        };
        self.mark(status);
        Ok(self.finish(game, start.elapsed().as_millis() as u64))
    }

    /// Top-k candidates by current estimate.
    pub fn top_k(&self) -> Vec<usize> {
        let means: Vec<f64> = self.state.players.iter().map(|p| p.stats.mean).collect();
        let mut top: Vec<usize> = order_desc(&means)
            .into_iter()
            .filter(|&i| self.candidates[i])
            .take(self.config.k)
            .collect();
        top.sort_unstable();
        top
    }

    pub fn finish(&self, game: &GameSpec, wall_ms: u64) -> ShapleyResult {
        let values: Vec<f64> = self.state.players.iter().map(|p| p.stats.mean).collect();
        let rank = ranks(&values);
        let players = self
            .state
            .players
            .iter()
            .enumerate()
            .map(|(i, p)| PlayerRecord {
                index: i,
                label: game.players().label(i),
                value: p.stats.mean,
                variance: p.stats.variance(),
                lb: p.lb,
                ub: p.ub,
                samples: p.stats.count,
                evals: p.evals,
                rank: rank[i],
            })
            .collect();
        let mean = |s: &RunningStats| (s.count > 0).then_some(s.mean);
        ShapleyResult::new(
            players,
            RunInfo {
                estimator: self.method.name().to_string(),
                game: game.oracle().describe(),
                config: Some(self.config.clone()),
                seeds: Some(SeedInfo {
                    root: self.config.seed,
                    next_walk: self.state.next_walk,
                }),
                eval_count: game.eval_count(),
                grand_evals: self.state.grand_evals,
                iterations: self.state.iteration,
                truncation_hits: self.state.truncation_hits,
                wall_ms,
                status: self.state.status.unwrap_or(RunStatus::Interrupted),
                top_k: self.top_k(),
                mean_full_value: mean(&self.state.full_value),
                mean_empty_value: mean(&self.state.empty_value),
                range: Some(self.state.range),
            },
        )
    }
}
