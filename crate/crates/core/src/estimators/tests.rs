use proptest::prelude::*;

use super::*;
use crate::exact::shapley_by_subsets;
use crate::game::{Coalition, GameSpec};
use crate::games::{make_additive, make_glove, make_sparse_synthetic, TableGame};

fn cfg(seed: u64) -> EstimatorConfig {
    EstimatorConfig::with_seed(seed)
}

#[test]
fn mc_glove_close_to_exact() {
    let g = make_glove(2).unwrap();
    let r = mc_shapley(&g, &cfg(1), Convergence::FixedIterations(50_000)).unwrap();
    for (v, e) in r.values().iter().zip([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0]) {
        assert!((v - e).abs() < 0.02, "{v} vs {e}");
    }
    assert_eq!(r.run.iterations, 50_000);
    assert_eq!(r.run.status, RunStatus::Converged);
}

#[test]
fn zero_iterations_is_all_zero() {
    let g = make_glove(3).unwrap();
    let r = mc_shapley(&g, &cfg(1), Convergence::FixedIterations(0)).unwrap();
    assert!(r.players.iter().all(|p| p.value == 0.0 && p.samples == 0));
    assert_eq!(g.eval_count(), 0);
}

#[test]
fn additive_exact_after_one_walk() {
    let w = vec![0.2, -0.3, 0.5, 0.125];
    let g = make_additive(w.clone()).unwrap();
    let r = mc_shapley(&g, &cfg(4), Convergence::FixedIterations(1)).unwrap();
    for (v, e) in r.values().iter().zip(&w) {
        assert!((v - e).abs() < 1e-12);
    }
}

#[test]
fn truncation_off_matches_plain_mc_bitwise() {
    let g1 = make_sparse_synthetic(12, 3, 2).unwrap();
    let g2 = make_sparse_synthetic(12, 3, 2).unwrap();
    let plain = mc_shapley(&g1, &cfg(9), Convergence::FixedIterations(300)).unwrap();
    let mut c = cfg(9);
    c.truncation = Some(f64::NEG_INFINITY);
    let trunc = truncated_mc_shapley(&g2, &c, Convergence::FixedIterations(300)).unwrap();
    assert_eq!(plain.players, trunc.players);
    assert_eq!(plain.run.eval_count, trunc.run.eval_count);
    assert_eq!(trunc.run.truncation_hits, 0);
}

#[test]
fn truncated_mc_needs_a_threshold() {
    let g = make_glove(2).unwrap();
    assert!(truncated_mc_shapley(&g, &cfg(1), Convergence::FixedIterations(5)).is_err());
}

#[test]
fn tmab_glove_picks_left() {
    let g = make_glove(2).unwrap();
    let mut c = cfg(3);
    c.epsilon = 0.01;
    let r = tmab_shapley(&g, &c).unwrap();
    assert_eq!(r.run.top_k, vec![0]);
    assert_eq!(r.run.status, RunStatus::Converged);
}

#[test]
fn tmab_k_equals_n_certifies_everyone() {
    let g = make_additive(vec![0.1, 0.2, 0.3]).unwrap();
    let mut c = cfg(5);
    c.k = 3;
    c.epsilon = 0.05;
    let r = tmab_shapley(&g, &c).unwrap();
    assert_eq!(r.run.top_k, vec![0, 1, 2]);
    assert_eq!(r.run.status, RunStatus::Converged);
    // The pivot player itself can only leave once its half-width is below ε.
    let pivot = &r.players[0];
    assert!(pivot.ub.unwrap() - pivot.value <= 0.05);
}

#[test]
fn tmab_rejects_k_above_candidates() {
    let g = make_glove(2).unwrap();
    let mut c = cfg(1);
    c.k = 4;
    let err = tmab_shapley(&g, &c).unwrap_err();
    assert!(err.to_string().contains("estimator.k"));
    c.k = 2;
    c.candidates = Some(vec![1]);
    assert!(tmab_shapley(&g, &c).is_err());
}

#[test]
fn inactive_players_stay_frozen() {
    let g = make_sparse_synthetic(20, 3, 4).unwrap();
    let mut c = cfg(8);
    c.k = 3;
    c.epsilon = 1e-3;
    c.max_iterations = 3000;
    let mut est = Estimator::new(&g, Method::Tmab, c).unwrap();
    let mut ever_left = [false; 20];
    while est.check_done().is_none() {
        let before = est.state().clone();
        est.step(&g).unwrap();
        for i in 0..20 {
            if !before.active[i] {
                ever_left[i] = true;
                assert_eq!(est.state().players[i].stats, before.players[i].stats, "player {i} changed");
                assert_eq!(est.state().players[i].lb, before.players[i].lb);
            }
        }
    }
    let left = ever_left.iter().filter(|&&l| l).count();
    assert!(left >= 17, "only {left} players left the active set");
}

#[test]
fn candidates_restrict_the_active_set() {
    let g = make_sparse_synthetic(10, 2, 1).unwrap();
    let mut c = cfg(2);
    c.candidates = Some(vec![0, 1, 2, 3]);
    c.k = 1;
    c.epsilon = 0.01;
    let r = tmab_shapley(&g, &c).unwrap();
    for p in &r.players[4..] {
        assert_eq!(p.samples, 0);
    }
    assert!(r.run.top_k[0] < 4);
}

#[test]
fn per_player_evals_sum_to_counter() {
    let g = make_sparse_synthetic(15, 3, 6).unwrap();
    let mut c = cfg(6);
    c.k = 3;
    c.epsilon = 0.005;
    let r = tmab_shapley(&g, &c).unwrap();
    let total: u64 = r.players.iter().map(|p| p.evals).sum::<u64>() + r.run.grand_evals;
    assert_eq!(total, r.run.eval_count);
    assert_eq!(r.run.eval_count, g.eval_count());
}

#[test]
fn bonferroni_widens_bounds() {
    let g = make_glove(4).unwrap();
    let mut a = cfg(3);
    a.k = 1;
    let mut b = a.clone();
    b.bonferroni = true;
    let ra = mc_shapley(&g, &a, Convergence::FixedIterations(200)).unwrap();
    let rb = mc_shapley(&make_glove(4).unwrap(), &b, Convergence::FixedIterations(200)).unwrap();
    assert!(rb.players[1].ub.unwrap() > ra.players[1].ub.unwrap());
}

#[test]
fn bernstein_stopping_converges_on_zero_variance_game() {
    let g = make_additive(vec![0.3, 0.1]).unwrap();
    let mut c = cfg(1);
    c.epsilon = 0.05;
    let r = mc_shapley(&g, &c, Convergence::BernsteinAllPlayers).unwrap();
    assert_eq!(r.run.status, RunStatus::Converged);
    // 7 ln(40) / (3 (t − 1)) ≤ 0.05 first holds at t = 174.
    assert_eq!(r.run.iterations, 174);
}

#[test]
fn iteration_cap_is_flagged() {
    let g = make_glove(3).unwrap();
    let mut c = cfg(1);
    c.max_iterations = 10;
    c.epsilon = 1e-6;
    let r = mc_shapley(&g, &c, Convergence::BernsteinAllPlayers).unwrap();
    assert_eq!(r.run.status, RunStatus::IterationCapped);
    assert_eq!(r.run.iterations, 10);
}

#[test]
fn range_widens_when_exceeded() {
    let g = make_additive(vec![3.0, 0.5]).unwrap();
    let r = mc_shapley(&g, &cfg(1), Convergence::FixedIterations(3)).unwrap();
    assert_eq!(r.run.range, Some(3.0));
}

#[test]
fn unbiased_over_seeds() {
    let table = TableGame::random(8, 17);
    let exact = shapley_by_subsets(&GameSpec::from_oracle(table.clone()).unwrap()).unwrap();
    let runs: Vec<Vec<f64>> = (0..20)
        .map(|s| {
            let g = GameSpec::from_oracle(table.clone()).unwrap();
            mc_shapley(&g, &cfg(100 + s), Convergence::FixedIterations(200)).unwrap().values()
        })
        .collect();
    for i in 0..8 {
        let xs: Vec<f64> = runs.iter().map(|r| r[i]).collect();
        let mean = xs.iter().sum::<f64>() / 20.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 19.0;
        let se = (var / 20.0).sqrt();
        assert!((mean - exact[i]).abs() <= 3.0 * se, "player {i}: {mean} vs {} (se {se})", exact[i]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn running_means_are_efficient(seed in 0u64..1000, n in 2usize..7, iters in 1u64..40) {
        let g = GameSpec::from_oracle(TableGame::random(n, seed)).unwrap();
        let r = mc_shapley(&g, &cfg(seed), Convergence::FixedIterations(iters)).unwrap();
        let sum: f64 = r.values().iter().sum();
        let full = g.evaluate(&Coalition::full(n)).unwrap();
        let empty = r.run.mean_empty_value.unwrap();
        prop_assert!((sum - (full - empty)).abs() < 1e-10);
    }

    #[test]
    fn single_thread_runs_repeat(seed in 0u64..1000) {
        let a = tmab_shapley(&make_sparse_synthetic(10, 2, seed).unwrap(), &EstimatorConfig { k: 2, epsilon: 0.01, ..cfg(seed) }).unwrap();
        let b = tmab_shapley(&make_sparse_synthetic(10, 2, seed).unwrap(), &EstimatorConfig { k: 2, epsilon: 0.01, ..cfg(seed) }).unwrap();
        let (mut a, mut b) = (a, b);
        a.run.wall_ms = 0;
        b.run.wall_ms = 0;
        prop_assert_eq!(a.to_json(), b.to_json());
    }
}
