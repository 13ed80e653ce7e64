use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};
use crate::game::{Coalition, GameSpec};
use crate::rng::{stream_rng, Stream};

/// Metric value after masking the top-`c` players of a ranking, per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemovalCurve {
    pub ranking: Vec<usize>,
    pub steps: Vec<usize>,
    pub values: Vec<f64>,
}

impl RemovalCurve {
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("removed,value\n");
        for (c, v) in self.steps.iter().zip(&self.values) {
            s.push_str(&format!("{c},{v}\n"));
        }
        s
    }
}

/// `ranking[0]` is removed first. The ranking must list every player once.
pub fn ablate(game: &GameSpec, ranking: &[usize], steps: &[usize]) -> Result<RemovalCurve> {
    let n = game.n();
    let mut seen = vec![false; n];
    for &p in ranking {
        if p >= n {
            return Err(ShapleyError::PlayerOutOfRange { player: p, n });
        }
        if std::mem::replace(&mut seen[p], true) {
            return Err(ShapleyError::invalid("ablate.ranking", format!("player {p} listed twice")));
        }
    }
    if ranking.len() != n {
        return Err(ShapleyError::invalid(
            "ablate.ranking",
            format!("ranking has {} players, game has {n}", ranking.len()),
        ));
    }
    if let Some(&c) = steps.iter().find(|&&c| c > n) {
        return Err(ShapleyError::invalid("ablate.steps", format!("step {c} exceeds {n} players")));
    }
    let values = steps
        .iter()
        .map(|&c| {
            let mut s = Coalition::full(n);
            for &p in &ranking[..c] {
                s.remove(p);
            }
            game.evaluate(&s)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RemovalCurve {
        ranking: ranking.to_vec(),
        steps: steps.to_vec(),
        values,
    })
}

/// The `index`-th seeded random removal order.
pub fn random_ranking(n: usize, seed: u64, index: u64) -> Vec<usize> {
    let mut r: Vec<usize> = (0..n).collect();
    r.shuffle(&mut stream_rng(seed, Stream::Ablation, index));
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::make_additive;

    #[test]
    fn curve_endpoints() {
        let g = make_additive(vec![0.5, 0.25, 0.125]).unwrap();
        let c = ablate(&g, &[0, 2, 1], &[0, 1, 2, 3]).unwrap();
        assert_eq!(c.values, vec![0.875, 0.375, 0.25, 0.0]);
        assert!(ablate(&g, &[0, 2, 1], &[4]).is_err());
        assert!(ablate(&g, &[0, 0, 1], &[1]).is_err());
        assert!(ablate(&g, &[0, 1], &[1]).is_err());
    }

    #[test]
    fn random_rankings_are_permutations() {
        let r = random_ranking(10, 3, 0);
        let mut s = r.clone();
        s.sort_unstable();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
        assert_eq!(r, random_ranking(10, 3, 0));
        assert_ne!(r, random_ranking(10, 3, 1));
    }
}
