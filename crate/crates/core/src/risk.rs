//! Convex risk measures over finite outcome spaces and their sample-based
//! estimators.
//!
//! Every measure here acts on LOSSES: larger outcomes are worse and the
//! measure is monotone nondecreasing. Callers holding utilities or values
//! negate them before evaluating a risk and negate the result afterwards.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("outcome and weight lengths differ ({outcomes} vs {weights})")]
    LengthMismatch { outcomes: usize, weights: usize },
    #[error("distribution has no outcomes")]
    Empty,
    #[error("weight {index} is negative or not finite ({value})")]
    BadWeight { index: usize, value: f64 },
    #[error("weights sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("outcome {index} is not finite ({value})")]
    NonFiniteOutcome { index: usize, value: f64 },
    #[error("sample set is empty")]
    NoSamples,
    #[error("invalid risk parameter: {0}")]
    BadParameter(String),
    #[error("dual candidate {candidate} has {got} outcomes, loss has {expected}")]
    SupportMismatch {
        candidate: usize,
        got: usize,
        expected: usize,
    },
}

/// A probability distribution over finitely many real outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteDistribution {
    outcomes: Vec<f64>,
    weights: Vec<f64>,
}

impl FiniteDistribution {
    pub fn new(outcomes: Vec<f64>, weights: Vec<f64>) -> Result<Self, RiskError> {
        if outcomes.len() != weights.len() {
            return Err(RiskError::LengthMismatch {
                outcomes: outcomes.len(),
                weights: weights.len(),
            });
        }
        if outcomes.is_empty() {
            return Err(RiskError::Empty);
        }
        for (index, &value) in outcomes.iter().enumerate() {
            if !value.is_finite() {
                return Err(RiskError::NonFiniteOutcome { index, value });
            }
        }
        check_weights(&weights)?;
        Ok(Self { outcomes, weights })
    }

    /// Equal weight on every outcome (duplicates keep their multiplicity).
    pub fn uniform(outcomes: Vec<f64>) -> Result<Self, RiskError> {
        let m = outcomes.len();
        if m == 0 {
            return Err(RiskError::Empty);
        }
        Self::new(outcomes, vec![1.0 / m as f64; m])
    }

    pub fn point_mass(value: f64) -> Self {
        Self {
            outcomes: vec![value],
            weights: vec![1.0],
        }
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn mean(&self) -> f64 {
        dot(&self.outcomes, &self.weights)
    }

    pub fn min(&self) -> f64 {
        support_fold(&self.outcomes, &self.weights, f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        support_fold(&self.outcomes, &self.weights, f64::NEG_INFINITY, f64::max)
    }

    /// Same weights, outcomes transformed pointwise.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            outcomes: self.outcomes.iter().map(|&z| f(z)).collect(),
            weights: self.weights.clone(),
        }
    }
}

fn support_fold(outcomes: &[f64], weights: &[f64], init: f64, f: fn(f64, f64) -> f64) -> f64 {
    outcomes
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .fold(init, |acc, (&z, _)| f(acc, z))
}

fn check_weights(weights: &[f64]) -> Result<(), RiskError> {
    let mut total = 0.0;
    for (index, &value) in weights.iter().enumerate() {
        if !(value.is_finite() && value >= 0.0) {
            return Err(RiskError::BadWeight { index, value });
        }
        total += value;
    }
    if (total - 1.0).abs() > WEIGHT_SUM_TOL * weights.len().max(1) as f64 {
        return Err(RiskError::NotNormalized(total));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A candidate distribution of a finite dual set with its penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCandidate {
    pub weights: Vec<f64>,
    pub penalty: f64,
}

/// Which risk measure a player applies, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RiskSpec {
    RiskNeutral,
    Entropic { tau: f64 },
    #[serde(rename = "CVaR")]
    Cvar { alpha: f64 },
    FiniteDual { dual_set: Vec<DualCandidate> },
}

impl RiskSpec {
    pub fn validate(&self) -> Result<(), RiskError> {
        match self {
            RiskSpec::RiskNeutral => Ok(()),
            RiskSpec::Entropic { tau } => check_tau(*tau),
            RiskSpec::Cvar { alpha } => check_alpha(*alpha),
            RiskSpec::FiniteDual { dual_set } => {
                if dual_set.is_empty() {
                    return Err(RiskError::BadParameter("dual set is empty".into()));
                }
                for c in dual_set {
                    check_weights(&c.weights)?;
                    if !c.penalty.is_finite() {
                        return Err(RiskError::BadParameter(format!(
                            "penalty {} is not finite",
                            c.penalty
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Risk of a loss distribution under this measure.
    pub fn evaluate(&self, dist: &FiniteDistribution) -> Result<f64, RiskError> {
        match self {
            RiskSpec::RiskNeutral => Ok(dist.mean()),
            RiskSpec::Entropic { tau } => entropic_risk(dist, *tau),
            RiskSpec::Cvar { alpha } => cvar(dist, *alpha),
            RiskSpec::FiniteDual { dual_set } => finite_dual_risk(dist.outcomes(), dual_set),
        }
    }
}

fn check_tau(tau: f64) -> Result<(), RiskError> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(RiskError::BadParameter(format!("tau must be positive, got {tau}")))
    }
}

fn check_alpha(alpha: f64) -> Result<(), RiskError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(RiskError::BadParameter(format!("alpha must lie in (0,1), got {alpha}")))
    }
}

/// `ln Σ_j w_j exp(x_j)`, shifted by the largest exponent. Zero weights are
/// skipped so that `-inf` log-weights never reach the sum.
pub fn log_sum_exp_weighted(exponents: &[f64], weights: &[f64]) -> f64 {
    let shift = exponents
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .fold(f64::NEG_INFINITY, |m, (&x, _)| m.max(x));
    if shift == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = exponents
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&x, &w)| w * (x - shift).exp())
        .sum();
    shift + s.ln()
}

/// Entropic risk `(1/τ) log Σ w exp(τ z)` of weighted outcomes, without input
/// validation. The hot paths of the solvers call this directly.
pub fn entropic_risk_raw(outcomes: &[f64], weights: &[f64], tau: f64) -> f64 {
    let shift = outcomes
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .fold(f64::NEG_INFINITY, |m, (&z, _)| m.max(z));
    let s: f64 = outcomes
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&z, &w)| w * (tau * (z - shift)).exp())
        .sum();
    shift + s.ln() / tau
}

/// Entropic risk of a loss distribution.
pub fn entropic_risk(dist: &FiniteDistribution, tau: f64) -> Result<f64, RiskError> {
    check_tau(tau)?;
    let rho = entropic_risk_raw(dist.outcomes(), dist.weights(), tau);
    // rounding can leave the shifted sum a hair outside the support hull
    Ok(rho.clamp(dist.min(), dist.max()))
}

/// Entropic risk of the empirical distribution of `samples`.
pub fn empirical_entropic(samples: &[f64], tau: f64) -> Result<f64, RiskError> {
    if samples.is_empty() {
        return Err(RiskError::NoSamples);
    }
    entropic_risk(&FiniteDistribution::uniform(samples.to_vec())?, tau)
}

/// Mean of the upper `1 - α` probability mass of a loss distribution.
pub fn cvar(dist: &FiniteDistribution, alpha: f64) -> Result<f64, RiskError> {
    check_alpha(alpha)?;
    let mut order: Vec<usize> = (0..dist.len()).collect();
    let z = dist.outcomes();
    order.sort_by(|&a, &b| z[b].total_cmp(&z[a]));
    let tail = 1.0 - alpha;
    let mut remaining = tail;
    let mut acc = 0.0;
    for &j in &order {
        if remaining <= 0.0 {
            break;
        }
        let take = dist.weights()[j].min(remaining);
        acc += take * z[j];
        remaining -= take;
    }
    Ok(acc / (tail - remaining.max(0.0)))
}

/// Empirical CVaR: the mass-weighted mean of the top `1 - α` fraction of
/// the samples. Differs from the order-statistic index sum starting at
/// `⌈αm⌉` by at most `max|Z| / ((1 - α) m)`, one extra order statistic.
pub fn empirical_cvar(samples: &[f64], alpha: f64) -> Result<f64, RiskError> {
    if samples.is_empty() {
        return Err(RiskError::NoSamples);
    }
    cvar(&FiniteDistribution::uniform(samples.to_vec())?, alpha)
}

/// `max_j (E_{p_j}[Z] - D(p_j))` over a finite set of candidates.
pub fn finite_dual_risk(loss: &[f64], dual_set: &[DualCandidate]) -> Result<f64, RiskError> {
    if dual_set.is_empty() {
        return Err(RiskError::BadParameter("dual set is empty".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for (candidate, c) in dual_set.iter().enumerate() {
        if c.weights.len() != loss.len() {
            return Err(RiskError::SupportMismatch {
                candidate,
                got: c.weights.len(),
                expected: loss.len(),
            });
        }
        best = best.max(dot(loss, &c.weights) - c.penalty);
    }
    Ok(best)
}

/// Environment-side risk of a continuation loss under an empirical next-state
/// kernel. `continuation[j]` is the loss at the kernel's j-th support point.
///
/// CVaR and finite-dual sets are evaluated on the kernel support directly;
/// finite-dual candidates must be indexed like the kernel.
pub fn env_risk_estimate(
    continuation: &[f64],
    empirical_kernel: &FiniteDistribution,
    spec: &RiskSpec,
) -> Result<f64, RiskError> {
    if empirical_kernel.is_empty() {
        return Err(RiskError::Empty);
    }
    if continuation.len() != empirical_kernel.len() {
        return Err(RiskError::LengthMismatch {
            outcomes: continuation.len(),
            weights: empirical_kernel.len(),
        });
    }
    let dist = FiniteDistribution::new(continuation.to_vec(), empirical_kernel.weights().to_vec())?;
    spec.evaluate(&dist)
}

/// Outcome of a randomized axiom check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxiomReport {
    pub convexity: bool,
    pub monotonicity: bool,
    pub translation_invariance: bool,
    /// Largest violation observed per axiom, in the same order.
    pub worst_violation: [f64; 3],
}

impl AxiomReport {
    pub fn all_pass(&self) -> bool {
        self.convexity && self.monotonicity && self.translation_invariance
    }
}

/// Randomized probes of convexity, monotonicity and translation invariance.
///
/// Each probe draws a support of 2..=6 atoms with random weights and two loss
/// vectors `x`, `y` on it; `y` is shifted up pointwise for the monotonicity
/// check.
pub fn risk_axiom_suite<R: Rng>(
    spec: &RiskSpec,
    probes: usize,
    rng: &mut R,
) -> Result<AxiomReport, RiskError> {
    spec.validate()?;
    const TOL: f64 = 1e-9;
    let mut worst = [0.0_f64; 3];
    for _ in 0..probes {
        let m = match spec {
            RiskSpec::FiniteDual { dual_set } => dual_set[0].weights.len(),
            _ => rng.gen_range(2..=6),
        };
        let mut w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let lambda: f64 = rng.gen_range(0.0..=1.0);
        let c: f64 = rng.gen_range(-3.0..3.0);

        let rho = |z: &[f64]| -> Result<f64, RiskError> {
            spec.evaluate(&FiniteDistribution::new(z.to_vec(), w.clone())?)
        };
        let mix: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        let convex_gap = rho(&mix)? - (lambda * rho(&x)? + (1.0 - lambda) * rho(&y)?);
        worst[0] = worst[0].max(convex_gap);

        let dominating: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a.max(*b)).collect();
        let mono_gap = rho(&x)? - rho(&dominating)?;
        worst[1] = worst[1].max(mono_gap);

        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let shift_gap = (rho(&shifted)? - rho(&x)? - c).abs();
        worst[2] = worst[2].max(shift_gap);
    }
    Ok(AxiomReport {
        convexity: worst[0] <= TOL,
        monotonicity: worst[1] <= TOL,
        translation_invariance: worst[2] <= TOL,
        worst_violation: worst,
    })
}
