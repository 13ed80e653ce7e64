//! Players, coalitions and the black-box value function contract.
//!
//! A [`GameSpec`] binds a player set to a [`ValueOracle`] and owns the
//! memoization cache and the oracle-call counter. Every estimator in the
//! crate talks to the game exclusively through [`GameSpec::evaluate`] and
//! friends, so the counter is an exact audit of how many times the
//! underlying oracle actually ran.

use std::any::Any;
use std::fmt;
use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use fixedbitset::FixedBitSet;
use lru::LruCache;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};

/// The player index set `{0..n-1}` with optional display labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerSet {
    n: usize,
    labels: Option<Vec<String>>,
}

impl PlayerSet {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(ShapleyError::invalid("players.n", "must be at least 1"));
        }
        Ok(PlayerSet { n, labels: None })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(ShapleyError::invalid("players.labels", "must be non-empty"));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(ShapleyError::invalid(
                    "players.labels",
                    format!("duplicate label `{l}`"),
                ));
            }
        }
        Ok(PlayerSet {
            n: labels.len(),
            labels: Some(labels),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => format!("p{i}"),
        }
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }
}

/// A subset of players stored as a fixed-width bit set.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Coalition {
    bits: FixedBitSet,
}

impl Coalition {
    pub fn empty(n: usize) -> Self {
        Coalition {
            bits: FixedBitSet::with_capacity(n),
        }
    }

    pub fn full(n: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(n);
        bits.insert_range(..);
        Coalition { bits }
    }

    pub fn from_members<I: IntoIterator<Item = usize>>(n: usize, members: I) -> Result<Self> {
        let mut c = Coalition::empty(n);
        for i in members {
            if i >= n {
                return Err(ShapleyError::PlayerOutOfRange { player: i, n });
            }
            c.bits.insert(i);
        }
        Ok(c)
    }

    /// Builds a coalition from the low `n` bits of `mask` (n <= 64).
    pub fn from_mask(n: usize, mask: u64) -> Self {
        debug_assert!(n <= 64);
        let mut c = Coalition::empty(n);
        let mut m = mask;
        while m != 0 {
            let i = m.trailing_zeros() as usize;
            if i < n {
                c.bits.insert(i);
            }
            m &= m - 1;
        }
        c
    }

    /// Number of players in the underlying game.
    pub fn capacity(&self) -> usize {
        self.bits.len()
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.bits.contains(i)
    }

    pub fn insert(&mut self, i: usize) {
        self.bits.insert(i);
    }

    pub fn remove(&mut self, i: usize) {
        self.bits.set(i, false);
    }

    pub fn with(&self, i: usize) -> Self {
        let mut c = self.clone();
        c.insert(i);
        c
    }

    pub fn without(&self, i: usize) -> Self {
        let mut c = self.clone();
        c.remove(i);
        c
    }

    pub fn complement(&self) -> Self {
        let mut bits = self.bits.clone();
        bits.toggle_range(..);
        Coalition { bits }
    }

    pub fn union_with(&mut self, other: &Coalition) {
        self.bits.union_with(&other.bits);
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.ones()
    }

    /// Lowercase hex of the member bits, least significant player first.
    pub fn to_hex(&self) -> String {
        let mut out = String::with_capacity(self.bits.len().div_ceil(4));
        for chunk in 0..self.bits.len().div_ceil(4) {
            let mut nib = 0u8;
            for b in 0..4 {
                let i = chunk * 4 + b;
                if i < self.bits.len() && self.bits.contains(i) {
                    nib |= 1 << b;
                }
            }
            out.push(char::from_digit(nib as u32, 16).unwrap());
        }
        out
    }

    pub fn from_hex(n: usize, hex: &str) -> Result<Self> {
        if hex.len() != n.div_ceil(4) {
            return Err(ShapleyError::invalid(
                "coalition",
                format!("hex length {} does not match {} players", hex.len(), n),
            ));
        }
        let mut c = Coalition::empty(n);
        for (chunk, ch) in hex.chars().enumerate() {
            let nib = ch
                .to_digit(16)
                .ok_or_else(|| ShapleyError::invalid("coalition", format!("bad hex digit `{ch}`")))?;
            for b in 0..4 {
                if nib & (1 << b) != 0 {
                    let i = chunk * 4 + b;
                    if i >= n {
                        return Err(ShapleyError::PlayerOutOfRange { player: i, n });
                    }
                    c.insert(i);
                }
            }
        }
        Ok(c)
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.members().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// A black-box performance score over coalitions.
///
/// Implementations must be pure functions of `(coalition, batch)`: the batch
/// token selects a per-iteration data sample for oracles that support it and
/// is `None` for a full evaluation.
pub trait ValueOracle: Send + Sync {
    fn n_players(&self) -> usize;

    fn value(&self, coalition: &Coalition, batch: Option<u64>) -> Result<f64>;

    /// Bounds on a single marginal contribution.
    fn declared_range(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }

    /// Whether the oracle scores a data sample selected by the batch token.
    fn batched(&self) -> bool {
        false
    }

    fn describe(&self) -> String;

    fn labels(&self) -> Option<Vec<String>> {
        None
    }

    fn as_any(&self) -> &dyn Any;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachePolicy {
    Off,
    Bounded(usize),
}

impl Default for CachePolicy {
    fn default() -> Self {
        CachePolicy::Bounded(DEFAULT_CACHE_ENTRIES)
    }
}

pub const DEFAULT_CACHE_ENTRIES: usize = 1 << 16;

type CacheKey = (Coalition, Option<u64>);

/// One oracle lookup: the score, and whether the oracle actually ran.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub fresh: bool,
}

/// A serializable snapshot of one cache entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub coalition: String,
    pub batch: Option<u64>,
    pub value: f64,
}

pub struct GameSpec {
    players: PlayerSet,
    oracle: Arc<dyn ValueOracle>,
    cache_policy: CachePolicy,
    cache: Option<Mutex<LruCache<CacheKey, f64>>>,
    evals: AtomicU64,
}

impl fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameSpec")
            .field("players", &self.players)
            .field("oracle", &self.oracle.describe())
            .field("cache_policy", &self.cache_policy)
            .field("evals", &self.eval_count())
            .finish()
    }
}

impl GameSpec {
    pub fn new(oracle: Arc<dyn ValueOracle>) -> Result<Self> {
        let players = match oracle.labels() {
            Some(labels) => {
                let p = PlayerSet::with_labels(labels)?;
                if p.len() != oracle.n_players() {
                    return Err(ShapleyError::SizeMismatch {
                        expected: oracle.n_players(),
                        found: p.len(),
                    });
                }
                p
            }
            None => PlayerSet::new(oracle.n_players())?,
        };
        Ok(Self::with_players(players, oracle, CachePolicy::default()))
    }

    pub fn from_oracle<O: ValueOracle + 'static>(oracle: O) -> Result<Self> {
        Self::new(Arc::new(oracle))
    }

    fn with_players(players: PlayerSet, oracle: Arc<dyn ValueOracle>, policy: CachePolicy) -> Self {
        GameSpec {
            players,
            oracle,
            cache_policy: policy,
            cache: make_cache(policy),
            evals: AtomicU64::new(0),
        }
    }

    pub fn with_cache_policy(mut self, policy: CachePolicy) -> Self {
        self.cache_policy = policy;
        self.cache = make_cache(policy);
        self
    }

    pub fn cache_policy(&self) -> CachePolicy {
        self.cache_policy
    }

    pub fn players(&self) -> &PlayerSet {
        &self.players
    }

    pub fn n(&self) -> usize {
        self.players.len()
    }

    pub fn oracle(&self) -> &Arc<dyn ValueOracle> {
        &self.oracle
    }

    pub fn declared_range(&self) -> (f64, f64) {
        self.oracle.declared_range()
    }

    pub fn batched(&self) -> bool {
        self.oracle.batched()
    }

    /// Number of times the oracle has actually been invoked.
    pub fn eval_count(&self) -> u64 {
        self.evals.load(Ordering::SeqCst)
    }

    pub fn set_eval_count(&self, count: u64) {
        self.evals.store(count, Ordering::SeqCst);
    }

    pub fn evaluate(&self, s: &Coalition) -> Result<f64> {
        Ok(self.evaluate_traced(s, None)?.value)
    }

    pub fn evaluate_on(&self, s: &Coalition, batch: Option<u64>) -> Result<f64> {
        Ok(self.evaluate_traced(s, batch)?.value)
    }

    /// Evaluates through the cache and reports whether the oracle ran.
    pub fn evaluate_traced(&self, s: &Coalition, batch: Option<u64>) -> Result<Evaluation> {
        self.check_size(s)?;
        if let Some(cache) = &self.cache {
            let key = (s.clone(), batch);
            if let Some(v) = cache.lock().expect("cache poisoned").get(&key) {
                return Ok(Evaluation {
                    value: *v,
                    fresh: false,
                });
            }
            let value = self.invoke(s, batch)?;
            cache.lock().expect("cache poisoned").put(key, value);
            Ok(Evaluation { value, fresh: true })
        } else {
            Ok(Evaluation {
                value: self.invoke(s, batch)?,
                fresh: true,
            })
        }
    }

    /// Evaluates without touching the cache; still counted.
    pub fn evaluate_uncached(&self, s: &Coalition, batch: Option<u64>) -> Result<f64> {
        self.check_size(s)?;
        self.invoke(s, batch)
    }

    /// `V(s ∪ {i}) − V(s)`.
    pub fn marginal(&self, s: &Coalition, i: usize) -> Result<f64> {
        self.marginal_on(s, i, None)
    }

    pub fn marginal_on(&self, s: &Coalition, i: usize, batch: Option<u64>) -> Result<f64> {
        self.check_size(s)?;
        if i >= self.n() {
            return Err(ShapleyError::PlayerOutOfRange {
                player: i,
                n: self.n(),
            });
        }
        if s.contains(i) {
            return Err(ShapleyError::PlayerInCoalition {
                player: i,
                coalition: s.to_string(),
            });
        }
        let with = self.evaluate_on(&s.with(i), batch)?;
        let without = self.evaluate_on(s, batch)?;
        Ok(with - without)
    }

    /// Cache contents from least to most recently used.
    pub fn cache_snapshot(&self) -> Vec<CacheEntry> {
        match &self.cache {
            None => Vec::new(),
            Some(cache) => {
                let guard = cache.lock().expect("cache poisoned");
                let mut out: Vec<CacheEntry> = guard
                    .iter()
                    .map(|((c, b), v)| CacheEntry {
                        coalition: c.to_hex(),
                        batch: *b,
                        value: *v,
                    })
                    .collect();
                out.reverse();
                out
            }
        }
    }

    pub fn restore_cache(&self, entries: &[CacheEntry]) -> Result<()> {
        if let Some(cache) = &self.cache {
            let mut guard = cache.lock().expect("cache poisoned");
            guard.clear();
            for e in entries {
                let c = Coalition::from_hex(self.n(), &e.coalition)?;
                guard.put((c, e.batch), e.value);
            }
        }
        Ok(())
    }

    fn check_size(&self, s: &Coalition) -> Result<()> {
        if s.capacity() != self.n() {
            return Err(ShapleyError::SizeMismatch {
                expected: self.n(),
                found: s.capacity(),
            });
        }
        Ok(())
    }

    fn invoke(&self, s: &Coalition, batch: Option<u64>) -> Result<f64> {
        self.evals.fetch_add(1, Ordering::SeqCst);
        let value = self.oracle.value(s, batch)?;
        if !value.is_finite() {
            return Err(ShapleyError::NonFinite {
                coalition: s.to_string(),
                value,
            });
        }
        Ok(value)
    }
}

fn make_cache(policy: CachePolicy) -> Option<Mutex<LruCache<CacheKey, f64>>> {
    match policy {
        CachePolicy::Off => None,
        CachePolicy::Bounded(cap) => {
            NonZeroUsize::new(cap).map(|cap| Mutex::new(LruCache::new(cap)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{make_additive, make_glove, AnalyticGame};
    use proptest::prelude::*;

    struct Broken;

    impl ValueOracle for Broken {
        fn n_players(&self) -> usize {
            2
        }
        fn value(&self, c: &Coalition, _: Option<u64>) -> Result<f64> {
            Ok(if c.len() == 2 { f64::NAN } else { 0.0 })
        }
        fn describe(&self) -> String {
            "broken".into()
        }
        fn as_any(&self) -> &dyn Any {
            self
        }
    }

    #[test]
    fn glove_pair_scores_one() {
        let g = make_glove(2).unwrap();
        let s = Coalition::from_members(3, [0, 1]).unwrap();
        assert_eq!(g.evaluate(&s).unwrap(), 1.0);
    }

    #[test]
    fn cached_repeat_does_not_count() {
        let g = make_glove(2).unwrap();
        let full = Coalition::full(3);
        g.evaluate(&full).unwrap();
        let before = g.eval_count();
        g.evaluate(&full).unwrap();
        assert_eq!(g.eval_count(), before);
        assert_eq!(before, 1);
    }

    #[test]
    fn cache_off_counts_every_call() {
        let g = make_glove(2).unwrap().with_cache_policy(CachePolicy::Off);
        let full = Coalition::full(3);
        g.evaluate(&full).unwrap();
        g.evaluate(&full).unwrap();
        assert_eq!(g.eval_count(), 2);
    }

    #[test]
    fn additive_singleton() {
        let g = make_additive(vec![0.2, 0.3]).unwrap();
        let s = Coalition::from_members(2, [0]).unwrap();
        assert_eq!(g.evaluate(&s).unwrap(), 0.2);
    }

    #[test]
    fn glove_marginals() {
        let g = make_glove(2).unwrap();
        let right1 = Coalition::from_members(3, [1]).unwrap();
        assert_eq!(g.marginal(&right1, 0).unwrap(), 1.0);
        assert_eq!(g.marginal(&Coalition::empty(3), 1).unwrap(), 0.0);
    }

    #[test]
    fn marginal_rejects_member() {
        let g = make_glove(2).unwrap();
        let s = Coalition::from_members(3, [0]).unwrap();
        assert!(matches!(
            g.marginal(&s, 0),
            Err(ShapleyError::PlayerInCoalition { player: 0, .. })
        ));
    }

    #[test]
    fn null_player_marginal_is_zero() {
        let g = GameSpec::from_oracle(AnalyticGame::Unanimity {
            n: 3,
            required: vec![0, 1],
        })
        .unwrap();
        for mask in 0..8u64 {
            let s = Coalition::from_mask(3, mask);
            if !s.contains(2) {
                assert_eq!(g.marginal(&s, 2).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn non_finite_is_reported_with_coalition() {
        let g = GameSpec::from_oracle(Broken).unwrap();
        let err = g.evaluate(&Coalition::full(2)).unwrap_err();
        assert!(err.to_string().contains("{0,1}"), "{err}");
    }

    #[test]
    fn labels_must_be_distinct() {
        assert!(PlayerSet::with_labels(vec!["a".into(), "a".into()]).is_err());
        assert!(PlayerSet::new(0).is_err());
    }

    #[test]
    fn snapshot_restores_lru_order() {
        let g = make_glove(3).unwrap().with_cache_policy(CachePolicy::Bounded(2));
        for m in [1u64, 2, 3] {
            g.evaluate(&Coalition::from_mask(4, m)).unwrap();
        }
        let snap = g.cache_snapshot();
        assert_eq!(snap.len(), 2);
        let h = make_glove(3).unwrap().with_cache_policy(CachePolicy::Bounded(2));
        h.restore_cache(&snap).unwrap();
        assert_eq!(h.cache_snapshot(), snap);
    }

    proptest! {
        #[test]
        fn insertion_order_is_irrelevant(mut members in proptest::collection::vec(0usize..40, 0..20), seed in any::<u64>()) {
            let a = Coalition::from_members(40, members.clone()).unwrap();
            members.reverse();
            let rot = (seed as usize) % (members.len().max(1));
            members.rotate_left(rot);
            let b = Coalition::from_members(40, members).unwrap();
            prop_assert_eq!(&a, &b);
            use std::hash::{BuildHasher, RandomState};
            let s = RandomState::new();
            prop_assert_eq!(s.hash_one(&a), s.hash_one(&b));
            prop_assert_eq!(Coalition::from_hex(40, &a.to_hex()).unwrap(), a);
        }

        #[test]
        fn telescoping_chain(perm_seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let g = crate::games::TableGame::random(6, perm_seed);
            let g = GameSpec::from_oracle(g).unwrap();
            let mut order: Vec<usize> = (0..6).collect();
            order.shuffle(&mut crate::rng::stream_rng(perm_seed, crate::rng::Stream::Permutation, 0));
            let mut s = Coalition::empty(6);
            let mut total = 0.0;
            for &i in &order {
                total += g.marginal(&s, i).unwrap();
                s.insert(i);
            }
            let expect = g.evaluate(&Coalition::full(6)).unwrap() - g.evaluate(&Coalition::empty(6)).unwrap();
            prop_assert!((total - expect).abs() < 1e-12);
        }
    }
}
