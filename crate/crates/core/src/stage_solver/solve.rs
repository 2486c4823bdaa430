use super::payoff::{l1, MixedProfile, StagePayoff};
use super::response::{
    entropy, maximize_objective, opponent_distribution, softmax, softmax_into, PlayerView,
    INNER_MAX_STEPS,
};
use super::{Method, SolverConfig, SolverError};
use crate::risk::log_sum_exp_weighted;

/// Per-player unilateral improvement from a smoothed best response.
#[derive(Debug, Clone, PartialEq)]
pub struct Exploitability {
    pub per_player: Vec<f64>,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    pub method: Method,
    pub iterations: usize,
    /// Stopping residual of the returned profile (ℓ1, largest over players).
    pub residual: f64,
    pub converged: bool,
    /// Present when the solve was certified.
    pub exploitability: Option<Exploitability>,
    pub certified: bool,
    /// Residual after each iteration.
    pub residual_trace: Vec<f64>,
    /// Lifted-game coarse-correlated gap of the averaged play (HedgeLifted).
    pub cce_gap: Option<f64>,
}

/// Solve the stage RQRE from the uniform profile and certify the result.
pub fn rqre_solve(payoff: &StagePayoff, cfg: &SolverConfig) -> Result<(MixedProfile, SolveDiagnostics), SolverError> {
    rqre_solve_from(payoff, cfg, &MixedProfile::uniform(payoff.action_counts()))
}

/// Solve from a given full-support starting profile and certify the result.
pub fn rqre_solve_from(
    payoff: &StagePayoff,
    cfg: &SolverConfig,
    init: &MixedProfile,
) -> Result<(MixedProfile, SolveDiagnostics), SolverError> {
    cfg.validate(payoff.num_players())?;
    init.check_shape(payoff)?;
    let (profile, mut diag) = solve_unchecked(payoff, cfg, init);
    let gap = exploitability_with(payoff, &profile, cfg);
    diag.certified = gap.max <= cfg.tol;
    diag.exploitability = Some(gap);
    Ok((profile, diag))
}

/// Solver without input validation or certification; the training loop calls
/// this on its own well-formed tensors.
pub(crate) fn solve_unchecked(
    payoff: &StagePayoff,
    cfg: &SolverConfig,
    init: &MixedProfile,
) -> (MixedProfile, SolveDiagnostics) {
    let mut pi = init.clone();
    for (i, &c) in payoff.action_counts().iter().enumerate() {
        if c == 1 {
            pi.0[i] = vec![1.0];
        }
    }
    match cfg.method {
        Method::FixedPoint => fixed_point(payoff, cfg, pi),
        Method::MirrorAscent => mirror_prox(payoff, cfg, pi),
        Method::HedgeLifted => hedge_lifted(payoff, cfg, pi),
    }
}

fn diagnostics(method: Method, iterations: usize, residual: f64, tol: f64, trace: Vec<f64>) -> SolveDiagnostics {
    SolveDiagnostics {
        method,
        iterations,
        residual,
        converged: residual <= tol,
        exploitability: None,
        certified: false,
        residual_trace: trace,
        cce_gap: None,
    }
}

/// Damped simultaneous smoothed best responses.
fn fixed_point(payoff: &StagePayoff, cfg: &SolverConfig, mut pi: MixedProfile) -> (MixedProfile, SolveDiagnostics) {
    let n = payoff.num_players();
    let inner_tol = (cfg.tol * 0.1).max(1e-14);
    let mut trace = Vec::new();
    let mut best = (pi.clone(), f64::INFINITY);
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let mut responses = Vec::with_capacity(n);
        let mut worst = 0.0_f64;
        for i in 0..n {
            if payoff.action_counts()[i] == 1 {
                responses.push(vec![1.0]);
                continue;
            }
            let opp = opponent_distribution(payoff, &pi, i);
            let mut view = PlayerView::new(payoff, i, &opp, cfg.epsilon[i], cfg.tau[i]);
            let r = maximize_objective(&mut view, pi.player(i), inner_tol, INNER_MAX_STEPS);
            worst = worst.max(l1(pi.player(i), &r.dist));
            responses.push(r.dist);
        }
        trace.push(worst);
        if worst < best.1 {
            best = (pi.clone(), worst);
        }
        if worst <= cfg.tol {
            break;
        }
        let d = cfg.damping;
        for (p, r) in pi.0.iter_mut().zip(&responses) {
            for (x, y) in p.iter_mut().zip(r) {
                *x = (1.0 - d) * *x + d * y;
            }
        }
    }
    let (profile, residual) = best;
    (profile, diagnostics(Method::FixedPoint, iterations, residual, cfg.tol, trace))
}

/// First-order residual `max_i ‖π_i - softmax(ε_i s_i(π))‖₁`, filling the
/// per-player scores.
fn foc_residual(payoff: &StagePayoff, cfg: &SolverConfig, pi: &MixedProfile, scores: &mut [Vec<f64>]) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..payoff.num_players() {
        if payoff.action_counts()[i] == 1 {
            continue;
        }
        let opp = opponent_distribution(payoff, pi, i);
        let mut view = PlayerView::new(payoff, i, &opp, cfg.epsilon[i], cfg.tau[i]);
        view.scores(pi.player(i), &mut scores[i]);
        let target = softmax(&scores[i], cfg.epsilon[i]);
        worst = worst.max(l1(pi.player(i), &target));
    }
    worst
}

/// `log μ' = (log μ + η g) / (1 + η/ε)`: one entropic mirror step with the
/// entropy regularizer handled in closed form.
fn prox_step(mu: &[f64], grad: &[f64], eta: f64, epsilon: f64, out: &mut [f64]) {
    let damp = 1.0 / (1.0 + eta / epsilon);
    let logits: Vec<f64> = mu
        .iter()
        .zip(grad)
        .map(|(&p, &g)| (p.max(1e-300).ln() + eta * g) * damp)
        .collect();
    softmax_into(&logits, 1.0, out);
}

/// Extragradient (mirror-prox) on the players' joint gradient field.
fn mirror_prox(payoff: &StagePayoff, cfg: &SolverConfig, mut pi: MixedProfile) -> (MixedProfile, SolveDiagnostics) {
    let n = payoff.num_players();
    let range = (0..n).map(|i| payoff.utility_range(i)).fold(0.0, f64::max);
    let tau_max = cfg.tau.iter().copied().fold(0.0, f64::max);
    let coupling = (n.saturating_sub(1)).max(1) as f64;
    let eta = if range > 0.0 {
        1.0 / (coupling * range * (1.0 + tau_max * range))
    } else {
        1.0
    };
    let mut scores: Vec<Vec<f64>> = payoff.action_counts().iter().map(|&c| vec![0.0; c]).collect();
    let mut half_scores = scores.clone();
    let mut half = pi.clone();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut residual = foc_residual(payoff, cfg, &pi, &mut scores);
    let mut best = (pi.clone(), residual);
    while residual > cfg.tol && iterations < cfg.max_iters {
        iterations += 1;
        for i in 0..n {
            if payoff.action_counts()[i] > 1 {
                prox_step(pi.player(i), &scores[i], eta, cfg.epsilon[i], &mut half.0[i]);
            }
        }
        foc_residual(payoff, cfg, &half, &mut half_scores);
        for i in 0..n {
            if payoff.action_counts()[i] > 1 {
                let current = pi.0[i].clone();
                prox_step(&current, &half_scores[i], eta, cfg.epsilon[i], &mut pi.0[i]);
            }
        }
        residual = foc_residual(payoff, cfg, &pi, &mut scores);
        trace.push(residual);
        if residual < best.1 {
            best = (pi.clone(), residual);
        }
    }
    let (profile, residual) = best;
    (profile, diagnostics(Method::MirrorAscent, iterations, residual, cfg.tol, trace))
}

/// Regularized Hedge in the lifted game: each player i runs entropic mirror
/// ascent on its regularized utility against an adversary that picks a
/// distribution `p_i` over the opponents' joint actions, paying
/// `-E_p[u_i] - KL(p ‖ π_{-i}) / τ_i`. Both sides use the step
/// `√(8 log|A| / T)`; the output is the average of the players' iterates.
fn hedge_lifted(payoff: &StagePayoff, cfg: &SolverConfig, mut pi: MixedProfile) -> (MixedProfile, SolveDiagnostics) {
    let n = payoff.num_players();
    let rounds = cfg.max_iters;
    let t = rounds as f64;
    let step = |count: usize| (8.0 * (count.max(2) as f64).ln() / t).sqrt();

    let opp_of = |pi: &MixedProfile, i: usize| opponent_distribution(payoff, pi, i);
    let mut adversary: Vec<Vec<f64>> = (0..n).map(|i| opp_of(&pi, i)).collect();

    let mut avg: Vec<Vec<f64>> = pi.0.iter().map(|d| vec![0.0; d.len()]).collect();
    // accumulators for the hindsight comparators of the 2n lifted players
    let mut score_sum: Vec<Vec<f64>> = avg.clone();
    let mut loss_sum: Vec<Vec<f64>> = adversary.iter().map(|a| vec![0.0; a.len()]).collect();
    let mut logq_sum: Vec<Vec<f64>> = loss_sum.clone();
    let mut realized_player = vec![0.0; n];
    let mut realized_adv = vec![0.0; n];

    let mut scores: Vec<Vec<f64>> = avg.clone();
    let mut u_mu: Vec<Vec<f64>> = loss_sum.clone();
    for _ in 0..rounds {
        let q: Vec<Vec<f64>> = (0..n).map(|i| opp_of(&pi, i)).collect();
        for i in 0..n {
            let p_i = if cfg.tau[i] > 0.0 { &adversary[i] } else { &q[i] };
            // s_i(a) = Σ_b p_i(b) u_i(a, b);  u_μ(b) = Σ_a π_i(a) u_i(a, b)
            scores[i].iter_mut().for_each(|v| *v = 0.0);
            u_mu[i].iter_mut().for_each(|v| *v = 0.0);
            for (joint, &u) in payoff.tensor(i).iter().enumerate() {
                let a = payoff.own_action(i, joint);
                let b = payoff.opp_index(i, joint);
                scores[i][a] += p_i[b] * u;
                u_mu[i][b] += pi.0[i][a] * u;
            }
            let eps = cfg.epsilon[i];
            realized_player[i] += dot(&pi.0[i], &scores[i]) + entropy(&pi.0[i]) / eps;
            score_sum[i].iter_mut().zip(&scores[i]).for_each(|(s, v)| *s += v);
            if cfg.tau[i] > 0.0 {
                let tau = cfg.tau[i];
                realized_adv[i] += -dot(&adversary[i], &u_mu[i]) - kl(&adversary[i], &q[i]) / tau;
                loss_sum[i].iter_mut().zip(&u_mu[i]).for_each(|(s, v)| *s += v);
                logq_sum[i]
                    .iter_mut()
                    .zip(&q[i])
                    .for_each(|(s, &v)| *s += v.max(1e-300).ln());
            }
        }
        for i in 0..n {
            avg[i].iter_mut().zip(&pi.0[i]).for_each(|(a, p)| *a += p);
        }
        // simultaneous updates
        for i in 0..n {
            if payoff.action_counts()[i] > 1 {
                let current = pi.0[i].clone();
                prox_step(&current, &scores[i], step(current.len()), cfg.epsilon[i], &mut pi.0[i]);
            }
            if cfg.tau[i] > 0.0 {
                let eta = step(adversary[i].len());
                let damp = 1.0 / (1.0 + eta / cfg.tau[i]);
                let logits: Vec<f64> = adversary[i]
                    .iter()
                    .zip(&u_mu[i])
                    .zip(&q[i])
                    .map(|((&p, &u), &qb)| {
                        (p.max(1e-300).ln() - eta * u + (eta / cfg.tau[i]) * qb.max(1e-300).ln()) * damp
                    })
                    .collect();
                softmax_into(&logits, 1.0, &mut adversary[i]);
            }
        }
    }
    for a in avg.iter_mut() {
        a.iter_mut().for_each(|v| *v /= t);
    }
    let profile = MixedProfile(avg);

    // best fixed deviation in hindsight for each lifted player
    let mut cce = 0.0_f64;
    for i in 0..n {
        let eps = cfg.epsilon[i];
        if payoff.action_counts()[i] > 1 {
            let mean: Vec<f64> = score_sum[i].iter().map(|s| eps * s / t).collect();
            let ones = vec![1.0; mean.len()];
            let best = log_sum_exp_weighted(&mean, &ones) / eps;
            cce = cce.max(best - realized_player[i] / t);
        }
        if cfg.tau[i] > 0.0 {
            let tau = cfg.tau[i];
            let expo: Vec<f64> = loss_sum[i]
                .iter()
                .zip(&logq_sum[i])
                .map(|(l, m)| (-tau * l + m) / t)
                .collect();
            let ones = vec![1.0; expo.len()];
            let best = log_sum_exp_weighted(&expo, &ones) / tau;
            cce = cce.max(best - realized_adv[i] / t);
        }
    }
    let mut scratch: Vec<Vec<f64>> = payoff.action_counts().iter().map(|&c| vec![0.0; c]).collect();
    let residual = foc_residual(payoff, cfg, &profile, &mut scratch);
    let mut diag = diagnostics(Method::HedgeLifted, rounds, residual, cfg.tol, Vec::new());
    diag.cce_gap = Some(cce);
    (profile, diag)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b.max(1e-300)).ln())
        .sum()
}

/// Exploitability of a profile; validates its inputs.
pub fn exploitability(
    payoff: &StagePayoff,
    profile: &MixedProfile,
    cfg: &SolverConfig,
) -> Result<Exploitability, SolverError> {
    cfg.validate(payoff.num_players())?;
    profile.check_shape(payoff)?;
    Ok(exploitability_with(payoff, profile, cfg))
}

/// Exploitability without input validation.
pub fn exploitability_with(payoff: &StagePayoff, profile: &MixedProfile, cfg: &SolverConfig) -> Exploitability {
    let n = payoff.num_players();
    let mut per_player = vec![0.0; n];
    for (i, gap) in per_player.iter_mut().enumerate() {
        let k = payoff.action_counts()[i];
        if k == 1 {
            continue;
        }
        let opp = opponent_distribution(payoff, profile, i);
        let eps = cfg.epsilon[i];
        let mut view = PlayerView::new(payoff, i, &opp, eps, cfg.tau[i]);
        let current = view.value(profile.player(i));
        let best = if cfg.tau[i] == 0.0 {
            let mut s = vec![0.0; k];
            view.scores(profile.player(i), &mut s);
            let scaled: Vec<f64> = s.iter().map(|v| eps * v).collect();
            log_sum_exp_weighted(&scaled, &vec![1.0; k]) / eps
        } else {
            maximize_objective(&mut view, profile.player(i), 1e-13, 4 * INNER_MAX_STEPS)
                .value
                .max(current)
        };
        *gap = best - current;
    }
    let max = per_player.iter().copied().fold(0.0, f64::max);
    Exploitability { per_player, max }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_game_is_uniform_in_one_iteration() {
        let g = StagePayoff::zeros(vec![2, 3]);
        for method in [Method::FixedPoint, Method::MirrorAscent] {
            let cfg = SolverConfig::symmetric(2, 1.0, 0.5).with_method(method);
            let (p, d) = rqre_solve(&g, &cfg).unwrap();
            assert!(d.iterations <= 1, "{method:?} took {}", d.iterations);
            assert!(d.certified);
            assert!(p.l1_distance(&MixedProfile::uniform(&[2, 3])) < 1e-15);
            assert!(d.exploitability.unwrap().max <= 1e-12);
        }
    }

    #[test]
    fn coordination_symmetric_fixed_point() {
        let g = StagePayoff::coordination(1.0);
        let cfg = SolverConfig::symmetric(2, 1.0, 0.0);
        let (p, d) = rqre_solve(&g, &cfg).unwrap();
        assert!(p.l1_distance(&MixedProfile::uniform(&[2, 2])) < 1e-12);
        assert!(d.exploitability.unwrap().max <= 1e-8);
    }

    #[test]
    fn one_action_players_are_point_masses() {
        let g = StagePayoff::new(vec![3, 1], vec![vec![1.0, 2.0, 3.0], vec![0.0; 3]]).unwrap();
        let cfg = SolverConfig::symmetric(2, 1.0, 0.7);
        let (p, d) = rqre_solve(&g, &cfg).unwrap();
        assert_eq!(p.player(1), &[1.0]);
        assert_eq!(d.exploitability.unwrap().per_player[1], 0.0);
        let expected = softmax(&[1.0, 2.0, 3.0], 1.0);
        assert!(l1(p.player(0), &expected) < 1e-9, "{:?} {:?}", p.player(0), expected);
    }

    #[test]
    fn exploitability_of_uniform_against_dummy() {
        // one real player with u = (1, 0) against a one-action dummy
        let g = StagePayoff::new(vec![2, 1], vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let cfg = SolverConfig::symmetric(2, 1.0, 0.0);
        let uniform = MixedProfile::uniform(&[2, 1]);
        let gap = exploitability(&g, &uniform, &cfg).unwrap();
        let e = 1f64.exp();
        let v_soft = (1.0 + e).ln(); // log Σ exp(u)
        let v_uniform = 0.5 + 2f64.ln();
        assert!((gap.max - (v_soft - v_uniform)).abs() < 1e-14);
        assert!(gap.max > 0.0);
    }

    #[test]
    fn methods_agree_on_stag_hunt() {
        let g = StagePayoff::stag_hunt().map(|_, _, v| v / 4.0);
        for tau in [0.0, 1.0] {
            let base = SolverConfig::symmetric(2, 1.0, tau).with_tol(1e-11);
            let (fp, _) = rqre_solve(&g, &base).unwrap();
            let (mp, d) = rqre_solve(&g, &base.clone().with_method(Method::MirrorAscent)).unwrap();
            assert!(d.converged, "{d:?}");
            assert!(fp.l1_distance(&mp) < 1e-8, "tau={tau}: {fp:?} vs {mp:?}");
        }
    }

    #[test]
    fn hedge_average_approaches_solution() {
        let g = StagePayoff::stag_hunt().map(|_, _, v| v / 4.0);
        let cfg = SolverConfig::symmetric(2, 1.0, 1.0).with_tol(1e-12);
        let (exact, _) = rqre_solve(&g, &cfg).unwrap();
        let hedge = cfg.clone().with_method(Method::HedgeLifted).with_max_iters(5000);
        let (avg, d) = rqre_solve(&g, &hedge).unwrap();
        assert!(avg.l1_distance(&exact) < 2e-2, "{avg:?} vs {exact:?}");
        assert!(d.cce_gap.unwrap() < 0.05);
    }
}
