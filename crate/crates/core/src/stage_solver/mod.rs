//! Stage-game RQRE: risk-adjusted, entropy-regularized equilibria of
//! normal-form games, with three solver backends and the exploitability
//! certificate used to check them.

mod payoff;
mod response;
mod solve;
mod stability;

pub use payoff::{l1, MixedProfile, StagePayoff};
pub use response::{
    entropy, maximize_objective, opponent_distribution, profile_value, softmax, PlayerView,
    SmoothedResponse, INNER_MAX_STEPS,
};
pub(crate) use solve::solve_unchecked;
pub use solve::{
    exploitability, exploitability_with, rqre_solve, rqre_solve_from, Exploitability,
    SolveDiagnostics,
};
pub use stability::{lipschitz_probe, nash_instability_demo, InstabilityRow};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("smoothed best response did not converge (residual {residual:.3e})")]
    NotConverged { residual: f64, iterate: Vec<f64> },
    #[error("stage solve not converged (residual {residual:.3e}, exploitability {exploitability:.3e})")]
    SolveNotConverged { residual: f64, exploitability: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    FixedPoint,
    MirrorAscent,
    HedgeLifted,
}

impl std::str::FromStr for Method {
    type Err = SolverError;
    fn from_str(s: &str) -> Result<Self, SolverError> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "fixedpoint" => Ok(Method::FixedPoint),
            "mirrorascent" | "mirrorprox" | "extragradient" => Ok(Method::MirrorAscent),
            "hedgelifted" | "hedge" => Ok(Method::HedgeLifted),
            _ => Err(SolverError::InvalidConfig(format!("unknown method `{s}`"))),
        }
    }
}

/// Solver parameters. `epsilon[i]` is player i's rationality precision and
/// `tau[i]` its policy-risk aversion (`0` = risk-neutral QRE).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: Vec<f64>,
    pub tau: Vec<f64>,
    pub method: Method,
    pub max_iters: usize,
    pub tol: f64,
    pub damping: f64,
}

impl SolverConfig {
    /// Same `ε`, `τ` for every player; fixed-point iteration with the default
    /// damping of 0.5.
    pub fn symmetric(players: usize, epsilon: f64, tau: f64) -> Self {
        Self {
            epsilon: vec![epsilon; players],
            tau: vec![tau; players],
            method: Method::FixedPoint,
            max_iters: 1000,
            tol: 1e-10,
            damping: 0.5,
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self, players: usize) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        if self.epsilon.len() != players || self.tau.len() != players {
            return bad(format!(
                "need {players} epsilon/tau entries, got {}/{}",
                self.epsilon.len(),
                self.tau.len()
            ));
        }
        if self.epsilon.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return bad("epsilon must be positive".into());
        }
        if self.tau.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
            return bad("tau must be nonnegative".into());
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive".into());
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must lie in (0, 1]".into());
        }
        Ok(())
    }
}

/// Smoothed (regularized, risk-adjusted) best response of `player` to the
/// opponents' strategies in `opponents` (the player's own entry is only used
/// as the starting point of the ascent).
pub fn smoothed_best_response(
    payoff: &StagePayoff,
    opponents: &MixedProfile,
    player: usize,
    cfg: &SolverConfig,
) -> Result<Vec<f64>, SolverError> {
    cfg.validate(payoff.num_players())?;
    opponents.check_shape(payoff)?;
    let opp = opponent_distribution(payoff, opponents, player);
    let mut view = PlayerView::new(payoff, player, &opp, cfg.epsilon[player], cfg.tau[player]);
    let start = vec![1.0 / payoff.action_counts()[player] as f64; payoff.action_counts()[player]];
    let r = maximize_objective(&mut view, &start, cfg.tol, INNER_MAX_STEPS);
    if r.converged {
        Ok(r.dist)
    } else {
        Err(SolverError::NotConverged {
            residual: r.residual,
            iterate: r.dist,
        })
    }
}

/// `V_i^{ε,τ}(π)`: risk-adjusted expected utility plus scaled entropy.
pub fn policy_risk_value(
    payoff: &StagePayoff,
    profile: &MixedProfile,
    player: usize,
    cfg: &SolverConfig,
) -> Result<f64, SolverError> {
    cfg.validate(payoff.num_players())?;
    profile.check_shape(payoff)?;
    Ok(profile_value(
        payoff,
        profile,
        player,
        cfg.epsilon[player],
        cfg.tau[player],
    ))
}
