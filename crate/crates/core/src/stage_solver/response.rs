//! Per-player risk-adjusted, entropy-regularized objectives and their
//! maximizers.
//!
//! Player i holding `μ ∈ Δ(A_i)` against opponents playing `q ∈ Δ(A_{-i})`
//! earns
//!
//! ```text
//! V(μ) = -(1/τ) log Σ_b q(b) exp(-τ u_μ(b)) + (1/ε) H(μ),   u_μ(b) = Σ_a μ(a) u(a, b)
//! ```
//!
//! and the risk-neutral limit `E_q[u_μ] + H(μ)/ε` when `τ = 0`.

use super::payoff::{l1, MixedProfile, StagePayoff};
use crate::risk::entropic_risk_raw;

pub const INNER_MAX_STEPS: usize = 500;
const MAX_BACKTRACKS: usize = 60;
const MAX_STEP: f64 = 1e12;

/// Shannon entropy `-Σ μ log μ` (with `0 log 0 = 0`).
pub fn entropy(dist: &[f64]) -> f64 {
    dist.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

pub fn softmax_into(scores: &[f64], scale: f64, out: &mut [f64]) {
    let m = scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(scale * s));
    let mut total = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = (scale * s - m).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

pub fn softmax(scores: &[f64], scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; scores.len()];
    softmax_into(scores, scale, &mut out);
    out
}

/// Distribution of the opponents' joint action under independent play,
/// indexed like `StagePayoff::opp_index`.
pub fn opponent_distribution(payoff: &StagePayoff, profile: &MixedProfile, player: usize) -> Vec<f64> {
    let mut q = vec![1.0];
    for j in (0..payoff.num_players()).filter(|&j| j != player) {
        let d = profile.player(j);
        let mut next = Vec::with_capacity(q.len() * d.len());
        for &prefix in &q {
            for &p in d {
                next.push(prefix * p);
            }
        }
        q = next;
    }
    q
}

/// Reusable per-player view of a stage game against fixed opponents.
pub struct PlayerView<'a> {
    payoff: &'a StagePayoff,
    player: usize,
    opp: &'a [f64],
    epsilon: f64,
    tau: f64,
    // scratch
    u_mu: Vec<f64>,
    tilt: Vec<f64>,
}

impl<'a> PlayerView<'a> {
    pub fn new(payoff: &'a StagePayoff, player: usize, opp: &'a [f64], epsilon: f64, tau: f64) -> Self {
        let m = payoff.opp_count(player);
        Self {
            payoff,
            player,
            opp,
            epsilon,
            tau,
            u_mu: vec![0.0; m],
            tilt: vec![0.0; m],
        }
    }

    fn fill_u_mu(&mut self, mu: &[f64]) {
        self.u_mu.iter_mut().for_each(|v| *v = 0.0);
        let t = self.payoff.tensor(self.player);
        for (joint, &u) in t.iter().enumerate() {
            let a = self.payoff.own_action(self.player, joint);
            let b = self.payoff.opp_index(self.player, joint);
            self.u_mu[b] += mu[a] * u;
        }
    }

    /// Risk-adjusted payoff term of the objective (without entropy).
    pub fn risk_term(&mut self, mu: &[f64]) -> f64 {
        self.fill_u_mu(mu);
        if self.tau == 0.0 {
            self.u_mu.iter().zip(self.opp).map(|(u, q)| u * q).sum()
        } else {
            let neg: Vec<f64> = self.u_mu.iter().map(|u| -u).collect();
            -entropic_risk_raw(&neg, self.opp, self.tau)
        }
    }

    pub fn value(&mut self, mu: &[f64]) -> f64 {
        self.risk_term(mu) + entropy(mu) / self.epsilon
    }

    /// Gradient of the risk term in μ: the utility of each own action
    /// against the adversarially tilted opponent distribution
    /// `w ∝ q exp(-τ u_μ)`.
    pub fn scores(&mut self, mu: &[f64], out: &mut [f64]) {
        if self.tau == 0.0 {
            self.tilt.copy_from_slice(self.opp);
        } else {
            self.fill_u_mu(mu);
            let shift = self
                .u_mu
                .iter()
                .zip(self.opp)
                .filter(|(_, &q)| q > 0.0)
                .fold(f64::INFINITY, |m, (&u, _)| m.min(u));
            let mut total = 0.0;
            for ((w, &u), &q) in self.tilt.iter_mut().zip(&self.u_mu).zip(self.opp) {
                *w = if q > 0.0 { q * (-self.tau * (u - shift)).exp() } else { 0.0 };
                total += *w;
            }
            self.tilt.iter_mut().for_each(|w| *w /= total);
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        let t = self.payoff.tensor(self.player);
        for (joint, &u) in t.iter().enumerate() {
            let a = self.payoff.own_action(self.player, joint);
            let b = self.payoff.opp_index(self.player, joint);
            out[a] += self.tilt[b] * u;
        }
    }

    /// First-order residual `‖μ - softmax(ε s(μ))‖₁`, zero exactly at the
    /// maximizer.
    pub fn residual(&mut self, mu: &[f64]) -> f64 {
        let mut s = vec![0.0; mu.len()];
        self.scores(mu, &mut s);
        let target = softmax(&s, self.epsilon);
        l1(mu, &target)
    }
}

/// Result of a smoothed best-response computation.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedResponse {
    pub dist: Vec<f64>,
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximize the player's objective over `Δ(A_i)` starting from `start`.
///
/// `τ = 0` is the exact logit map. For `τ > 0`, proximal entropic mirror
/// ascent: `log μ' = (log μ + η s(μ)) / (1 + η/ε)` with the entropy handled
/// in closed form, backtracking halving on objective decrease and doubling
/// after accepted steps.
pub fn maximize_objective(view: &mut PlayerView<'_>, start: &[f64], tol: f64, max_steps: usize) -> SmoothedResponse {
    let k = start.len();
    let mut s = vec![0.0; k];
    if k == 1 {
        let value = view.value(start);
        return SmoothedResponse {
            dist: vec![1.0],
            value,
            residual: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    if view.tau == 0.0 {
        view.scores(start, &mut s);
        let dist = softmax(&s, view.epsilon);
        let value = view.value(&dist);
        return SmoothedResponse {
            dist,
            value,
            residual: 0.0,
            iterations: 1,
            converged: true,
        };
    }

    let range = view.payoff.utility_range(view.player);
    let mut mu: Vec<f64> = start.iter().map(|&p| p.max(1e-300)).collect();
    let total: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|p| *p /= total);
    if range == 0.0 {
        // constant payoffs: maximizer is the uniform distribution
        let dist = vec![1.0 / k as f64; k];
        let value = view.value(&dist);
        return SmoothedResponse {
            dist,
            value,
            residual: 0.0,
            iterations: 1,
            converged: true,
        };
    }
    let mut eta = 1.0 / (view.tau * range * range);
    let mut f = view.value(&mu);
    let mut candidate = vec![0.0; k];
    let mut target = vec![0.0; k];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_steps {
        view.scores(&mu, &mut s);
        softmax_into(&s, view.epsilon, &mut target);
        residual = l1(&mu, &target);
        if residual <= tol {
            break;
        }
        iterations += 1;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let damp = 1.0 / (1.0 + eta / view.epsilon);
            let logits: Vec<f64> = mu
                .iter()
                .zip(&s)
                .map(|(&p, &g)| (p.ln() + eta * g) * damp)
                .collect();
            softmax_into(&logits, 1.0, &mut candidate);
            let fc = view.value(&candidate);
            // near the maximizer objective differences drop below rounding;
            // fall back to requiring a smaller first-order residual
            let flat = fc >= f - 1e-14 * (1.0 + f.abs()) && view.residual(&candidate) < residual;
            if fc >= f || flat {
                mu.copy_from_slice(&candidate);
                f = fc;
                eta = (eta * 2.0).min(MAX_STEP);
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            // no ascent direction left at floating-point resolution
            break;
        }
    }
    if iterations == max_steps {
        view.scores(&mu, &mut s);
        softmax_into(&s, view.epsilon, &mut target);
        residual = l1(&mu, &target);
    }
    SmoothedResponse {
        dist: mu,
        value: f,
        residual,
        iterations,
        converged: residual <= tol,
    }
}

/// `V_i^{ε,τ}` of a full profile for one player.
pub fn profile_value(payoff: &StagePayoff, profile: &MixedProfile, player: usize, epsilon: f64, tau: f64) -> f64 {
    let opp = opponent_distribution(payoff, profile, player);
    PlayerView::new(payoff, player, &opp, epsilon, tau).value(profile.player(player))
}
