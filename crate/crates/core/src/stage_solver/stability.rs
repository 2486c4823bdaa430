use rand::Rng;

use super::payoff::{MixedProfile, StagePayoff};
use super::solve::rqre_solve;
use super::{SolverConfig, SolverError};

fn solve_checked(payoff: &StagePayoff, cfg: &SolverConfig) -> Result<MixedProfile, SolverError> {
    let (profile, diag) = rqre_solve(payoff, cfg)?;
    if !diag.converged {
        return Err(SolverError::SolveNotConverged {
            residual: diag.residual,
            exploitability: diag.exploitability.map_or(f64::NAN, |e| e.max),
        });
    }
    Ok(profile)
}

/// Largest observed `‖π(Q) - π(Q̃)‖₁ / ‖Q - Q̃‖∞` over random perturbations
/// with entries drawn uniformly from `[-magnitude, magnitude]`. Profile
/// distances are the largest per-player ℓ1 distance.
pub fn lipschitz_probe<R: Rng>(
    payoff: &StagePayoff,
    cfg: &SolverConfig,
    num_perturbations: usize,
    magnitude: f64,
    rng: &mut R,
) -> Result<f64, SolverError> {
    if !(magnitude > 0.0) {
        return Err(SolverError::InvalidConfig("magnitude must be positive".into()));
    }
    let base = solve_checked(payoff, cfg)?;
    let mut worst = 0.0_f64;
    for _ in 0..num_perturbations {
        let perturbed = payoff.map(|_, _, v| v + rng.gen_range(-magnitude..=magnitude));
        let dq = payoff.sup_distance(&perturbed);
        if dq == 0.0 {
            continue;
        }
        let moved = solve_checked(&perturbed, cfg)?;
        worst = worst.max(base.l1_distance(&moved) / dq);
    }
    Ok(worst)
}

/// One row of the Nash-versus-RQRE selection comparison on the coordination
/// family `Q(α) = ((1,0),(0,α))` across `α = 1 ± δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstabilityRow {
    pub epsilon_pert: f64,
    /// `‖Q(1-δ) - Q(1+δ)‖∞ = 2δ`
    pub alpha_gap: f64,
    /// Per-player ℓ1 jump of the payoff-dominant pure Nash selection.
    pub nash_jump: f64,
    pub nash_lipschitz: f64,
    pub rqre_change: f64,
    pub rqre_ratio: f64,
}

/// The payoff-dominant pure equilibrium of `Q(α)`: `(e1, e1)` when `α < 1`,
/// `(e2, e2)` when `α > 1`.
fn nash_selection(alpha: f64) -> MixedProfile {
    let e = if alpha < 1.0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
    MixedProfile(vec![e.clone(), e])
}

pub fn nash_instability_demo(epsilon_pert_values: &[f64], cfg: &SolverConfig) -> Result<Vec<InstabilityRow>, SolverError> {
    epsilon_pert_values
        .iter()
        .map(|&delta| {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(SolverError::InvalidConfig(format!(
                    "perturbation {delta} must lie in (0, 1)"
                )));
            }
            let low = StagePayoff::coordination(1.0 - delta);
            let high = StagePayoff::coordination(1.0 + delta);
            let alpha_gap = low.sup_distance(&high);
            let nash_jump = nash_selection(1.0 - delta).l1_distance(&nash_selection(1.0 + delta));
            let rqre_change = solve_checked(&low, cfg)?.l1_distance(&solve_checked(&high, cfg)?);
            Ok(InstabilityRow {
                epsilon_pert: delta,
                alpha_gap,
                nash_jump,
                nash_lipschitz: nash_jump / alpha_gap,
                rqre_change,
                rqre_ratio: rqre_change / alpha_gap,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nash_jump_is_two_and_lipschitz_diverges() {
        let cfg = SolverConfig::symmetric(2, 1.0, 0.0);
        let rows = nash_instability_demo(&[0.1, 0.01], &cfg).unwrap();
        assert_eq!(rows[0].nash_jump, 2.0);
        assert!((rows[0].nash_lipschitz - 10.0).abs() < 1e-9);
        assert!((rows[1].nash_lipschitz - 100.0).abs() < 1e-7);
        assert!(rows[1].rqre_ratio < 1.0);
    }

    #[test]
    fn rejects_bad_perturbations() {
        let cfg = SolverConfig::symmetric(2, 1.0, 0.0);
        assert!(nash_instability_demo(&[0.0], &cfg).is_err());
    }
}
