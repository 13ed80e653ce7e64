//! Brute-force Shapley values for small games.
//!
//! Two independent routes: a weighted sum over all subsets, and an average
//! over all orderings. Neither exploits game structure.

use rayon::prelude::*;

use crate::error::{Result, ShapleyError};
use crate::game::{Coalition, GameSpec};

pub const DEFAULT_SUBSET_CAP: usize = 20;
pub const PERMUTATION_CAP: usize = 8;

/// Compensated (Neumaier) accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for j in 0..k {
        acc = acc * (n - j) / (j + 1);
    }
    acc
}

/// Evaluates every coalition once (bypassing the cache) in mask order.
pub fn value_table(game: &GameSpec) -> Result<Vec<f64>> {
    let n = game.n();
    (0..1u64 << n)
        .into_par_iter()
        .map(|mask| game.evaluate_uncached(&Coalition::from_mask(n, mask), None))
        .collect()
}

/// Shapley values from the subset formula, with the default cap of 20 players.
pub fn shapley_by_subsets(game: &GameSpec) -> Result<Vec<f64>> {
    shapley_by_subsets_capped(game, DEFAULT_SUBSET_CAP)
}

/// `φ_i = Σ_{S ⊆ N∖{i}} (V(S ∪ {i}) − V(S)) / (n · C(n−1, |S|))`.
///
/// Marginals are summed per coalition size first, then each size class is
/// divided once by its exact integer weight `n · C(n−1, s)`.
pub fn shapley_by_subsets_capped(game: &GameSpec, cap: usize) -> Result<Vec<f64>> {
    let n = game.n();
    if n > cap || n > 63 {
        return Err(ShapleyError::TooManyPlayers {
            what: "subset enumeration",
            n,
            cap,
        });
    }
    let table = value_table(game)?;
    let phi = (0..n)
        .into_par_iter()
        .map(|i| {
            let bit = 1u64 << i;
            let mut by_size = vec![KahanSum::default(); n];
            for mask in 0..1u64 << n {
                if mask & bit != 0 {
                    continue;
                }
                let size = mask.count_ones() as usize;
                by_size[size].add(table[(mask | bit) as usize] - table[mask as usize]);
            }
            let mut total = KahanSum::default();
            for (s, acc) in by_size.iter().enumerate() {
                let denom = n as u64 * binomial(n as u64 - 1, s as u64);
                total.add(acc.value() / denom as f64);
            }
            total.value()
        })
        .collect();
    Ok(phi)
}

/// Averages marginals over all `n!` orderings, each walked by adding players
/// one at a time. Uses the game's cache for repeated coalitions.
pub fn shapley_by_permutations(game: &GameSpec) -> Result<Vec<f64>> {
    let n = game.n();
    if n > PERMUTATION_CAP {
        return Err(ShapleyError::TooManyPlayers {
            what: "permutation enumeration",
            n,
            cap: PERMUTATION_CAP,
        });
    }
    let mut sums = vec![KahanSum::default(); n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut count: u64 = 0;
    let mut visit = |order: &[usize]| -> Result<()> {
        let mut s = Coalition::empty(n);
        let mut prev = game.evaluate(&s)?;
        for &p in order {
            s.insert(p);
            let cur = game.evaluate(&s)?;
            sums[p].add(cur - prev);
            prev = cur;
        }
        count += 1;
        Ok(())
    };
    // Heap's algorithm, iterative form.
    let mut c = vec![0usize; n];
    visit(&order)?;
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            visit(&order)?;
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(sums.iter().map(|s| s.value() / count as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// Hand enumeration of the six orderings of glove(2): the left player
    /// (0) is pivotal unless it comes first; a right player is pivotal only
    /// in the ordering (0, j, ·).
    fn glove2_by_hand() -> Vec<f64> {
        let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut phi = [0.0; 3];
        for o in orders {
            let mut seen = [false; 3];
            for &p in &o {
                let before = seen[0] && (seen[1] || seen[2]);
                seen[p] = true;
                let after = seen[0] && (seen[1] || seen[2]);
                phi[p] += (after as u8 as f64 - before as u8 as f64) / 6.0;
            }
        }
        phi.to_vec()
    }

    #[test]
    fn hand_oracle_matches_closed_form() {
        assert!(close(&glove2_by_hand(), &[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1e-15));
    }

    #[test]
    fn glove_both_routes() {
        let expect = glove2_by_hand();
        let g = make_glove(2).unwrap();
        assert!(close(&shapley_by_subsets(&g).unwrap(), &expect, 1e-12));
        assert!(close(&shapley_by_permutations(&g).unwrap(), &expect, 1e-12));
    }

    #[test]
    fn subsets_touch_each_coalition_once() {
        let g = make_glove(4).unwrap();
        shapley_by_subsets(&g).unwrap();
        assert_eq!(g.eval_count(), 32);
    }

    #[test]
    fn additive_identity() {
        let g = make_additive(vec![0.2, 0.3, 0.5]).unwrap();
        assert!(close(&shapley_by_subsets(&g).unwrap(), &[0.2, 0.3, 0.5], 1e-12));
        assert!(close(&shapley_by_permutations(&g).unwrap(), &[0.2, 0.3, 0.5], 1e-12));
    }

    #[test]
    fn voting_pivots() {
        // Each player is pivotal when it arrives second: 2 of 6 orderings.
        let g = make_weighted_voting(51.0, vec![49.0, 49.0, 2.0]).unwrap();
        let third = [1.0 / 3.0; 3];
        assert!(close(&shapley_by_subsets(&g).unwrap(), &third, 1e-12));
        assert!(close(&shapley_by_permutations(&g).unwrap(), &third, 1e-12));
        let g = make_weighted_voting(1.0, vec![5.0]).unwrap();
        assert!(close(&shapley_by_subsets(&g).unwrap(), &[1.0], 1e-12));
        let g = make_weighted_voting(100.0, vec![1.0, 1.0]).unwrap();
        assert!(close(&shapley_by_subsets(&g).unwrap(), &[0.0, 0.0], 0.0));
    }

    #[test]
    fn single_player() {
        let g = GameSpec::from_oracle(TableGame::new(1, vec![0.25, 0.75]).unwrap()).unwrap();
        assert!(close(&shapley_by_permutations(&g).unwrap(), &[0.5], 1e-15));
        assert!(close(&shapley_by_subsets(&g).unwrap(), &[0.5], 1e-15));
    }

    #[test]
    fn unanimity_pair_of_three() {
        let g = make_unanimity(3, vec![0, 1]).unwrap();
        assert!(close(&shapley_by_permutations(&g).unwrap(), &[0.5, 0.5, 0.0], 1e-12));
    }

    #[test]
    fn caps_are_enforced() {
        let g = make_additive(vec![0.0; 9]).unwrap();
        assert!(matches!(
            shapley_by_permutations(&g),
            Err(ShapleyError::TooManyPlayers { n: 9, cap: 8, .. })
        ));
        let g = make_additive(vec![0.0; 21]).unwrap();
        let err = shapley_by_subsets(&g).unwrap_err();
        assert!(err.to_string().contains("exceeds the cap of 20"));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(19, 9), 92378);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(5, 5), 1);
    }
}
