use linuct::bandit::{BanditAgent, FlatUcbBandit, LinUctBandit};
use linuct::baselines::{flat_ucb_score, puct_score};
use linuct::{ConvexLoss, DesignConfig, JointAction, MatGame, MatGameSpec, RewardMode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(n: usize, d: usize, mode: RewardMode) -> MatGameSpec {
    MatGameSpec {
        agents: n,
        actions: d,
        mode,
        ..MatGameSpec::default()
    }
}

fn moments(spec: &MatGameSpec, samples: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let xs: Vec<f64> = (0..samples).map(|_| spec.sample_noise(&mut rng)).collect();
    let mean = xs.iter().sum::<f64>() / samples as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
    (mean, var)
}

#[test]
fn noise_moments() {
    let s = spec(2, 3, RewardMode::Nonlinear);
    assert_eq!(s.noise_variance(), 7.0);
    let (m, v) = moments(&s, 200_000);
    assert!(m.abs() < 0.03, "mean {m}");
    assert!((v - 7.0).abs() < 0.1, "variance {v}");

    let unit = MatGameSpec {
        noise_scale: 1.0 / 7f64.sqrt(),
        ..s
    };
    assert!((unit.noise_variance() - 1.0).abs() < 1e-12);
    let (_, v) = moments(&unit, 200_000);
    assert!((v - 1.0).abs() < 0.02, "variance {v}");
}

#[test]
fn common_random_numbers_across_actions() {
    // two games with one seed see identical noise whatever is played
    let s = MatGameSpec {
        seed: 3,
        episode_length: 50,
        ..spec(3, 4, RewardMode::Nonlinear)
    };
    let mut g1 = MatGame::new(s.clone()).unwrap();
    let mut g2 = MatGame::new(s.clone()).unwrap();
    let a = JointAction::new(4, vec![0, 1, 2]).unwrap();
    let b = JointAction::new(4, vec![3, 3, 3]).unwrap();
    for _ in 0..50 {
        let (x, _) = g1.step(&a).unwrap();
        let (y, _) = g2.step(&b).unwrap();
        let gap = s.mean_reward(&b).unwrap() - s.mean_reward(&a).unwrap();
        assert!((y - x - gap).abs() < 1e-12);
    }
}

#[test]
fn puct_matches_hand_computation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let q = rng.random_range(-5.0..5.0);
        let p = rng.random_range(0.0..1.0);
        let n = rng.random_range(0..50u64);
        let total = n + rng.random_range(0..50u64);
        let c = rng.random_range(0.0..3.0);
        let expected = q + c * p * (total as f64).sqrt() / (n as f64 + 1.0);
        assert_eq!(puct_score(q, p, n, total, c), expected);
    }
    assert!(flat_ucb_score(0.0, 0, 0).is_infinite());
}

fn paired_regret(n: usize, d: usize, steps: usize, seed: u64) -> (Vec<f64>, Vec<f64>, JointAction) {
    let s = MatGameSpec {
        seed,
        noise_scale: 1.0 / 7f64.sqrt(),
        episode_length: steps,
        ..spec(n, d, RewardMode::Nonlinear)
    };
    let (_, best) = s.oracle_optimum();
    let norm = s.payoff_weights().iter().map(|w| w * w).sum::<f64>().sqrt();
    let mut lin =
        LinUctBandit::new(n, d, &DesignConfig::default(), ConvexLoss::default(), 0.01, norm).unwrap();
    let mut flat = FlatUcbBandit::new(n, d).unwrap();
    let mut g1 = MatGame::new(s.clone()).unwrap();
    let mut g2 = MatGame::new(s.clone()).unwrap();
    let (mut r_lin, mut r_flat) = (Vec::new(), Vec::new());
    for _ in 0..steps {
        let a = lin.choose().unwrap();
        let (x, _) = g1.step(&a).unwrap();
        lin.observe(&a, x).unwrap();
        r_lin.push(best - s.mean_reward(&a).unwrap());
        let b = flat.choose().unwrap();
        let (y, _) = g2.step(&b).unwrap();
        flat.observe(&b, y).unwrap();
        r_flat.push(best - s.mean_reward(&b).unwrap());
    }
    (r_lin, r_flat, flat.choose().unwrap())
}

#[test]
fn both_bandits_identify_the_small_game_optimum() {
    // With only nine arms the flat learner is competitive; both settle on
    // the optimum and the linear learner's regret rate falls over time.
    let (lin, _, flat_choice) = paired_regret(2, 3, 1000, 1);
    assert_eq!(flat_choice.indices(), &[2, 2]);
    let early: f64 = lin[..500].iter().sum();
    let late: f64 = lin[500..].iter().sum();
    assert!(late < 0.5 * early, "early {early} late {late}");
    assert_eq!(lin[990..].iter().filter(|r| **r == 0.0).count(), 10);
}

#[test]
fn linear_bandit_beats_flat_ucb_on_large_joint_space() {
    let (lin, flat, _) = paired_regret(4, 5, 2000, 2);
    let (r_lin, r_flat): (f64, f64) = (lin.iter().sum(), flat.iter().sum());
    assert!(r_lin < r_flat, "linear {r_lin} vs flat {r_flat}");
}

proptest! {
    #[test]
    fn oracle_matches_enumeration(n in 1usize..5, d in 1usize..6) {
        let s = spec(n, d, RewardMode::Linear);
        let (a, v) = s.oracle_optimum();
        let best = JointAction::enumerate(n, d)
            .map(|x| s.mean_reward(&x).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(v, best);
        prop_assert_eq!(s.mean_reward(&a).unwrap(), best);
    }

    #[test]
    fn linear_reward_is_index_sum(idx in prop::collection::vec(0usize..6, 1..6), seed in any::<u64>()) {
        let s = spec(idx.len(), 6, RewardMode::Linear);
        let a = JointAction::new(6, idx.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(s.reward(&a, &mut rng).unwrap(), idx.iter().sum::<usize>() as f64);
    }
}
