//! One pass over a random permutation: the removal chain
//! `v_0 = V(N)`, `v_j = V(N ∖ {π_1..π_j})`, whose differences
//! `v_{j-1} − v_j` are the marginal contributions of `π_j`.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::game::{Coalition, GameSpec};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Debug)]
pub struct WalkPlan {
    pub index: u64,
    pub permutation: Vec<usize>,
    pub batch: Option<u64>,
    /// Players whose marginals are measured; `None` measures everyone.
    pub active: Option<Arc<Vec<bool>>>,
    pub truncation: Option<f64>,
}

impl WalkPlan {
    pub fn new(
        n: usize,
        seed: u64,
        index: u64,
        batched: bool,
        active: Option<Arc<Vec<bool>>>,
        truncation: Option<f64>,
    ) -> Self {
        let mut permutation: Vec<usize> = (0..n).collect();
        permutation.shuffle(&mut stream_rng(seed, Stream::Permutation, index));
        let batch = batched.then(|| stream_rng(seed, Stream::Batch, index).random::<u64>());
        WalkPlan {
            index,
            permutation,
            batch,
            active,
            truncation,
        }
    }

    fn measures(&self, player: usize) -> bool {
        self.active.as_ref().is_none_or(|a| a[player])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub player: usize,
    pub marginal: f64,
    /// Fresh oracle calls spent on this marginal.
    pub evals: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkOutcome {
    pub index: u64,
    pub samples: Vec<Sample>,
    pub v_full: f64,
    /// Chain value at the empty coalition, when the walk reached it.
    pub v_empty: Option<f64>,
    pub truncated: bool,
    /// Fresh oracle calls spent on `V(N)`.
    pub grand_evals: u32,
}

/// Walks the chain, evaluating only what the measured players need.
///
/// For a run of unmeasured players the chain is not evaluated; the next
/// measured player pays for one extra call at its own "before" position.
/// Once an observed chain value drops below the truncation threshold the
/// rest of the chain is frozen at that value and no further calls are made.
pub fn execute_walk(game: &GameSpec, plan: &WalkPlan) -> Result<WalkOutcome> {
    let n = game.n();
    let mut remaining = Coalition::full(n);
    let full = game.evaluate_traced(&remaining, plan.batch)?;
    let mut known_pos = 0usize;
    let mut known_val = full.value;
    let mut frozen: Option<f64> = None;
    let mut samples = Vec::with_capacity(if plan.active.is_some() { 8 } else { n });

    for (j, &p) in plan.permutation.iter().enumerate() {
        let pos = j + 1;
        remaining.remove(p);
        if !plan.measures(p) {
            continue;
        }
        let mut evals = 0u32;
        let before = match frozen {
            Some(f) => f,
            None if known_pos == pos - 1 => known_val,
            None => {
                remaining.insert(p);
                let e = game.evaluate_traced(&remaining, plan.batch)?;
                remaining.remove(p);
                evals += e.fresh as u32;
                e.value
            }
        };
        let after = match (frozen, plan.truncation) {
            (Some(f), _) => f,
            (None, Some(vt)) if before < vt => {
                frozen = Some(before);
                before
            }
            _ => {
                let e = game.evaluate_traced(&remaining, plan.batch)?;
                evals += e.fresh as u32;
                e.value
            }
        };
        known_pos = pos;
        known_val = after;
        samples.push(Sample {
            player: p,
            marginal: before - after,
            evals,
        });
    }

    let v_empty = match frozen {
        Some(f) => Some(f),
        None if known_pos == n => Some(known_val),
        None => None,
    };
    Ok(WalkOutcome {
        index: plan.index,
        samples,
        v_full: full.value,
        v_empty,
        truncated: frozen.is_some(),
        grand_evals: full.fresh as u32,
    })
}
