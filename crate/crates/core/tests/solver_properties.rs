use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rqre_core::stage_solver::{
    exploitability, opponent_distribution, rqre_solve, rqre_solve_from, softmax, MixedProfile, SolverConfig,
    StagePayoff,
};

fn random_game(rng: &mut ChaCha8Rng, n: usize) -> StagePayoff {
    let mut t = || (0..n * n).map(|_| rng.gen::<f64>()).collect::<Vec<_>>();
    let a = t();
    let b = t();
    StagePayoff::new(vec![n, n], vec![a, b]).unwrap()
}

fn random_profile(rng: &mut ChaCha8Rng, n: usize) -> MixedProfile {
    let mut d = || {
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.iter().map(|v| v / s).collect::<Vec<_>>()
    };
    MixedProfile(vec![d(), d()])
}

#[test]
fn random_starts_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = 0.0_f64;
    for g in 0..36 {
        let n = if g % 2 == 0 { 2 } else { 3 };
        let game = random_game(&mut rng, n);
        let eps = [0.5, 1.0, 10.0][g % 3];
        let tau = [0.0, 0.5, 2.0][(g / 3) % 3];
        let cfg = SolverConfig::symmetric(2, eps, tau).with_tol(1e-11).with_max_iters(5000);
        let (base, d) = rqre_solve(&game, &cfg).unwrap();
        assert!(d.certified, "game {g}: {d:?}");
        for _ in 0..5 {
            let init = random_profile(&mut rng, n);
            let (p, _) = rqre_solve_from(&game, &cfg, &init).unwrap();
            worst = worst.max(base.l1_distance(&p));
        }
    }
    assert!(worst <= 1e-6, "largest disagreement {worst:e}");
}

#[test]
fn zero_tau_solution_is_a_logit_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let tol = 1e-10;
    for _ in 0..30 {
        let game = random_game(&mut rng, 3);
        let cfg = SolverConfig::symmetric(2, 2.0, 0.0).with_tol(tol);
        let (p, _) = rqre_solve(&game, &cfg).unwrap();
        for i in 0..2 {
            let opp = opponent_distribution(&game, &p, i);
            let scores: Vec<f64> = (0..3)
                .map(|a| {
                    (0..3)
                        .map(|b| {
                            let joint = if i == 0 { [a, b] } else { [b, a] };
                            opp[b] * game.utility(i, &joint)
                        })
                        .sum()
                })
                .collect();
            let target = softmax(&scores, 2.0);
            let r: f64 = p.player(i).iter().zip(&target).map(|(x, y)| (x - y).abs()).sum();
            assert!(r <= 10.0 * tol, "player {i}: residual {r:e}");
        }
    }
}

#[test]
fn payoff_shift_leaves_solution_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for k in 0..20 {
        let game = random_game(&mut rng, 2 + k % 2);
        let c = rng.gen_range(-5.0..5.0);
        let shifted = game.map(|_, _, v| v + c);
        for tau in [0.0, 1.0] {
            let cfg = SolverConfig::symmetric(2, 1.0, tau).with_tol(1e-12);
            let (a, _) = rqre_solve(&game, &cfg).unwrap();
            let (b, _) = rqre_solve(&shifted, &cfg).unwrap();
            assert!(a.l1_distance(&b) <= 1e-8, "tau {tau}: {a:?} vs {b:?}");
        }
    }
}

#[test]
fn rationality_limits() {
    // action 0 strictly dominant for both
    let game = StagePayoff::bimatrix(&[vec![1.0, 1.0], vec![0.0, 0.0]], &[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let sharp = SolverConfig::symmetric(2, 1e3, 0.0);
    let (p, _) = rqre_solve(&game, &sharp).unwrap();
    assert!(p.player(0)[0] >= 1.0 - 1e-3 && p.player(1)[0] >= 1.0 - 1e-3, "{p:?}");
    let flat = SolverConfig::symmetric(2, 1e-3, 0.0);
    let (p, _) = rqre_solve(&game, &flat).unwrap();
    assert!(p.l1_distance(&MixedProfile::uniform(&[2, 2])) <= 1e-3, "{p:?}");
}

#[test]
fn stag_probability_is_monotone_in_tau() {
    let game = StagePayoff::stag_hunt().map(|_, _, v| v / 4.0);
    let stag: Vec<f64> = (-3..=3)
        .map(|k| {
            let tau = 10f64.powi(k);
            let cfg = SolverConfig::symmetric(2, 4.0, tau).with_tol(1e-12);
            rqre_solve(&game, &cfg).unwrap().0.player(0)[0]
        })
        .collect();
    let up = stag.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let down = stag.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    // observed direction: decreasing in tau
    assert!(up || down, "{stag:?}");
}

#[test]
fn exploitability_is_nonnegative_and_small_at_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..30 {
        let game = random_game(&mut rng, 3);
        let cfg = SolverConfig::symmetric(2, 1.5, 0.7).with_tol(1e-9);
        let (p, _) = rqre_solve(&game, &cfg).unwrap();
        assert!(exploitability(&game, &p, &cfg).unwrap().max <= cfg.tol);
        let other = random_profile(&mut rng, 3);
        let gap = exploitability(&game, &other, &cfg).unwrap();
        assert!(gap.per_player.iter().all(|&g| g >= 0.0), "{gap:?}");
    }
}
