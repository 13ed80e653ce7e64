//! Job execution: builds the game, drives an estimator on one or more
//! worker threads, checkpoints, and writes the result documents.
//!
//! With one worker every walk is planned and merged in order, so a run is
//! a pure function of its inputs. With more workers the coordinator plans
//! walks against the current active set, workers execute them, and the
//! coordinator merges outcomes in arrival order. Estimates are then
//! statistically equivalent but not bit-identical across runs.

pub mod ablate;
pub mod checkpoint;

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crossbeam_channel::{bounded, unbounded};
use log::{debug, info};
use serde::{Deserialize, Serialize};

pub use ablate::{ablate, random_ranking, RemovalCurve};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};

use crate::error::{Result, ShapleyError};
use crate::estimators::walk::{execute_walk, WalkOutcome, WalkPlan};
use crate::estimators::{
    Estimator, EstimatorConfig, Method, RunStatus, ShapleyResult,
};
use crate::exact::{shapley_by_permutations, shapley_by_subsets_capped, DEFAULT_SUBSET_CAP};
use crate::game::{CachePolicy, Coalition, GameSpec};
use crate::games::{
    make_additive, make_glove, make_sparse_synthetic, make_unanimity, make_weighted_voting,
};
use crate::neuron::{Bundle, MaskFill, Metric};

/// How to construct the game of a job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GameBinding {
    Glove {
        n_right: usize,
    },
    WeightedVoting {
        quota: f64,
        weights: Vec<f64>,
    },
    Additive {
        weights: Vec<f64>,
    },
    Unanimity {
        n: usize,
        required: Vec<usize>,
    },
    SparseSynthetic {
        n: usize,
        k_hot: usize,
        seed: u64,
    },
    Neuron {
        bundle: PathBuf,
        metric: Metric,
        #[serde(default)]
        batch_size: Option<usize>,
        #[serde(default)]
        fill: MaskFill,
    },
}

impl GameBinding {
    pub fn build(&self) -> Result<GameSpec> {
        match self {
            GameBinding::Glove { n_right } => make_glove(*n_right),
            GameBinding::WeightedVoting { quota, weights } => make_weighted_voting(*quota, weights.clone()),
            GameBinding::Additive { weights } => make_additive(weights.clone()),
            GameBinding::Unanimity { n, required } => make_unanimity(*n, required.clone()),
            GameBinding::SparseSynthetic { n, k_hot, seed } => make_sparse_synthetic(*n, *k_hot, *seed),
            GameBinding::Neuron {
                bundle,
                metric,
                batch_size,
                fill,
            } => {
                let b = Bundle::load(bundle)?;
                b.neuron_game(metric.clone(), *batch_size, *fill)?.into_spec()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactRoute {
    Subsets,
    Permutations,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorChoice {
    Exact { route: ExactRoute },
    Sampling { method: Method },
}

#[derive(Clone, Debug, PartialEq)]
pub struct JobSpec {
    pub game: GameBinding,
    pub estimator: EstimatorChoice,
    pub config: EstimatorConfig,
    pub cache: CachePolicy,
    pub workers: usize,
    /// Merged walks between checkpoints.
    pub checkpoint_interval: u64,
    pub checkpoint: Option<PathBuf>,
    /// Continue from `checkpoint` when it exists.
    pub resume: bool,
    /// Stop after this many merged walks (total, across resumes) with a
    /// checkpoint, as if the process had been killed there.
    pub halt_after: Option<u64>,
    /// Record wall-clock time; off keeps result documents reproducible.
    pub record_timing: bool,
    pub subset_cap: usize,
    pub output_json: Option<PathBuf>,
    pub output_csv: Option<PathBuf>,
}

impl JobSpec {
    pub fn new(game: GameBinding, estimator: EstimatorChoice, config: EstimatorConfig) -> Self {
        JobSpec {
            game,
            estimator,
            config,
            cache: CachePolicy::default(),
            workers: 1,
            checkpoint_interval: 50,
            checkpoint: None,
            resume: false,
            halt_after: None,
            record_timing: false,
            subset_cap: DEFAULT_SUBSET_CAP,
            output_json: None,
            output_csv: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(ShapleyError::invalid("runner.workers", "must be at least 1"));
        }
        if self.checkpoint_interval == 0 {
            return Err(ShapleyError::invalid("runner.checkpoint_interval", "must be at least 1"));
        }
        if self.resume && self.checkpoint.is_none() {
            return Err(ShapleyError::invalid("runner.resume", "needs runner.checkpoint"));
        }
        Ok(())
    }
}

/// Builds the game and runs the job, writing any requested outputs.
pub fn run_job(spec: &JobSpec) -> Result<ShapleyResult> {
    spec.validate()?;
    let game = spec.game.build()?.with_cache_policy(spec.cache);
    run_with_game(&game, spec)
}

/// Runs a job against an already constructed game.
pub fn run_with_game(game: &GameSpec, spec: &JobSpec) -> Result<ShapleyResult> {
    spec.validate()?;
    let start = Instant::now();
    let mut result = match spec.estimator {
        EstimatorChoice::Exact { route } => run_exact(game, route, spec.subset_cap)?,
        EstimatorChoice::Sampling { method } => run_sampling(game, method, spec)?,
    };
    result.run.wall_ms = if spec.record_timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    };
    if let Some(p) = &spec.output_json {
        result.write_json(p)?;
    }
    if let Some(p) = &spec.output_csv {
        result.write_csv(p)?;
    }
    Ok(result)
}

pub fn run_exact(game: &GameSpec, route: ExactRoute, cap: usize) -> Result<ShapleyResult> {
    let values = match route {
        ExactRoute::Subsets => shapley_by_subsets_capped(game, cap)?,
        ExactRoute::Permutations => shapley_by_permutations(game)?,
    };
    let estimator = match route {
        ExactRoute::Subsets => "exact_subsets",
        ExactRoute::Permutations => "exact_permutations",
    };
    let mut result = ShapleyResult::from_scores(game, values, estimator);
    let n = game.n();
    result.run.mean_full_value = Some(game.evaluate(&Coalition::full(n))?);
    result.run.mean_empty_value = Some(game.evaluate(&Coalition::empty(n))?);
    result.run.eval_count = game.eval_count();
    Ok(result)
}

fn load_or_start(game: &GameSpec, method: Method, spec: &JobSpec) -> Result<Estimator> {
    if spec.resume {
        let path = spec.checkpoint.as_ref().expect("validated");
        if path.exists() {
            let cp = Checkpoint::read(path)?;
            let corrupt = |reason: &str| ShapleyError::CorruptCheckpoint {
                path: path.display().to_string(),
                reason: reason.into(),
            };
            if cp.game != game.oracle().describe() {
                return Err(corrupt("checkpoint was written for a different game"));
            }
            if cp.method != method || cp.config != spec.config {
                return Err(corrupt("checkpoint was written for a different estimator configuration"));
            }
            if cp.state.players.len() != game.n() {
                return Err(corrupt("player count differs from the game"));
            }
            game.restore_cache(&cp.cache)?;
            game.set_eval_count(cp.eval_count);
            info!("resuming from {} at iteration {}", path.display(), cp.state.iteration);
            return Estimator::resume(game, method, cp.config, cp.state);
        }
    }
    Estimator::new(game, method, spec.config.clone())
}

fn save_checkpoint(game: &GameSpec, est: &Estimator, path: &Path) -> Result<()> {
    let cp = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        game: game.oracle().describe(),
        method: est.method(),
        config: est.config().clone(),
        state: est.state().clone(),
        eval_count: game.eval_count(),
        cache: game.cache_snapshot(),
    };
    debug!("checkpoint at iteration {} -> {}", est.state().iteration, path.display());
    cp.write(path)
}

/// Why the driving loop stopped.
enum Stop {
    Done(RunStatus),
    Halt,
}

fn stop_reason(est: &Estimator, spec: &JobSpec) -> Option<Stop> {
    if let Some(s) = est.check_done() {
        return Some(Stop::Done(s));
    }
    match spec.halt_after {
        Some(h) if est.state().iteration >= h => Some(Stop::Halt),
        _ => None,
    }
}

fn run_sampling(game: &GameSpec, method: Method, spec: &JobSpec) -> Result<ShapleyResult> {
    let mut est = load_or_start(game, method, spec)?;
    let stop = if spec.workers == 1 {
        drive_sequential(game, &mut est, spec)?
    } else {
        drive_parallel(game, &mut est, spec)?
    };
    match stop {
        Stop::Done(status) => {
            est.mark(status);
            if let Some(p) = &spec.checkpoint {
                save_checkpoint(game, &est, p)?;
            }
        }
        Stop::Halt => {
            est.mark(RunStatus::Interrupted);
            if let Some(p) = &spec.checkpoint {
                save_checkpoint(game, &est, p)?;
            }
        }
    }
    Ok(est.finish(game, 0))
}

fn maybe_checkpoint(game: &GameSpec, est: &Estimator, spec: &JobSpec) -> Result<()> {
    if let Some(p) = &spec.checkpoint {
        if est.state().iteration.is_multiple_of(spec.checkpoint_interval) {
            save_checkpoint(game, est, p)?;
        }
    }
    Ok(())
}

fn drive_sequential(game: &GameSpec, est: &mut Estimator, spec: &JobSpec) -> Result<Stop> {
    loop {
        if let Some(s) = stop_reason(est, spec) {
            return Ok(s);
        }
        est.step(game)?;
        maybe_checkpoint(game, est, spec)?;
    }
}

/// Coordinator loop. Keeps up to `2 × workers` walks in flight, merges them
/// as they arrive, and drains everything before a checkpoint or the end so
/// that no oracle call goes unaccounted.
fn drive_parallel(game: &GameSpec, est: &mut Estimator, spec: &JobSpec) -> Result<Stop> {
    let window = 2 * spec.workers;
    let (plan_tx, plan_rx) = bounded::<WalkPlan>(window);
    let (out_tx, out_rx) = unbounded::<Result<WalkOutcome>>();
    std::thread::scope(|scope| {
        for _ in 0..spec.workers {
            let plan_rx = plan_rx.clone();
            let out_tx = out_tx.clone();
            scope.spawn(move || {
                for plan in plan_rx {
                    if out_tx.send(execute_walk(game, &plan)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(out_tx);
        let result = coordinate(game, est, spec, window, &plan_tx, &out_rx);
        drop(plan_tx);
        // Workers exit once the plan channel closes; collect stragglers so
        // their oracle calls are still booked.
        for out in out_rx.iter().flatten() {
            est.absorb_evals(&out);
        }
        result
    })
}

fn coordinate(
    game: &GameSpec,
    est: &mut Estimator,
    spec: &JobSpec,
    window: usize,
    plan_tx: &crossbeam_channel::Sender<WalkPlan>,
    out_rx: &crossbeam_channel::Receiver<Result<WalkOutcome>>,
) -> Result<Stop> {
    let mut in_flight: VecDeque<u64> = VecDeque::new();
    let mut next_checkpoint = est.state().iteration + spec.checkpoint_interval;
    let mut stop: Option<Stop> = None;
    loop {
        if stop.is_none() {
            stop = stop_reason(est, spec);
        }
        let draining = stop.is_some()
            || (spec.checkpoint.is_some() && est.state().iteration >= next_checkpoint);
        if !draining {
            while in_flight.len() < window {
                let planned_total = est.state().iteration + in_flight.len() as u64;
                if spec.halt_after.is_some_and(|h| planned_total >= h)
                    || fixed_remaining(est).is_some_and(|m| planned_total >= m)
                {
                    break;
                }
                let plan = est.plan();
                in_flight.push_back(plan.index);
                plan_tx.send(plan).expect("workers alive while coordinator runs");
            }
        }
        if in_flight.is_empty() {
            if let Some(s) = stop {
                return Ok(s);
            }
            if draining {
                if let Some(p) = &spec.checkpoint {
                    save_checkpoint(game, est, p)?;
                }
                next_checkpoint = est.state().iteration + spec.checkpoint_interval;
                continue;
            }
        }
        let out = out_rx.recv().expect("workers alive while walks are in flight")?;
        in_flight.retain(|&i| i != out.index);
        if stop.is_some() {
            est.absorb_evals(&out);
        } else {
            est.merge(&out);
        }
    }
}

/// Walk budget of a fixed-iteration Monte Carlo run.
fn fixed_remaining(est: &Estimator) -> Option<u64> {
    use crate::estimators::Convergence;
    match est.method() {
        Method::Mc {
            convergence: Convergence::FixedIterations(m),
        }
        | Method::TruncatedMc {
            convergence: Convergence::FixedIterations(m),
        } => Some(m),
        _ => None,
    }
}
