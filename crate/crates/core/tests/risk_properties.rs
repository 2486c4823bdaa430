use proptest::prelude::*;
use rqre_core::risk::{
    empirical_entropic, entropic_risk, finite_dual_risk, DualCandidate, FiniteDistribution,
};

fn distribution() -> impl Strategy<Value = FiniteDistribution> {
    (1usize..7)
        .prop_flat_map(|m| {
            (
                prop::collection::vec(-20.0..20.0f64, m),
                prop::collection::vec(0.01..1.0f64, m),
            )
        })
        .prop_map(|(z, w)| {
            let s: f64 = w.iter().sum();
            FiniteDistribution::new(z, w.iter().map(|v| v / s).collect()).unwrap()
        })
}

proptest! {
    #[test]
    fn entropic_lies_between_min_and_max(d in distribution(), tau in 1e-3..50.0f64) {
        let r = entropic_risk(&d, tau).unwrap();
        prop_assert!(r >= d.min() - 1e-12 && r <= d.max() + 1e-12);
    }

    #[test]
    fn entropic_is_nondecreasing_in_tau(d in distribution(), a in 1e-3..10.0f64, b in 1e-3..10.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(entropic_risk(&d, lo).unwrap() <= entropic_risk(&d, hi).unwrap() + 1e-12);
    }

    #[test]
    fn entropic_translation_is_exact(d in distribution(), tau in 1e-3..10.0f64, c in -100.0..100.0f64) {
        let shifted = entropic_risk(&d.map(|v| v + c), tau).unwrap();
        prop_assert!((shifted - entropic_risk(&d, tau).unwrap() - c).abs() <= 1e-12);
    }

    #[test]
    fn empirical_matches_distribution_with_multiplicities(
        counts in prop::collection::vec(1usize..5, 1..5),
        values in prop::collection::vec(-5.0..5.0f64, 5),
        tau in 0.01..5.0f64,
    ) {
        let mut samples = Vec::new();
        for (k, &c) in counts.iter().enumerate() {
            samples.extend(std::iter::repeat(values[k]).take(c));
        }
        let total: usize = counts.iter().sum();
        let d = FiniteDistribution::new(
            values[..counts.len()].to_vec(),
            counts.iter().map(|&c| c as f64 / total as f64).collect(),
        ).unwrap();
        let a = empirical_entropic(&samples, tau).unwrap();
        let b = entropic_risk(&d, tau).unwrap();
        prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

/// KL-penalized candidates on a grid over the two-point simplex.
fn kl_grid(q: f64, tau: f64, n: usize) -> Vec<DualCandidate> {
    (0..=n)
        .map(|k| {
            let p = k as f64 / n as f64;
            let kl = [(p, q), (1.0 - p, 1.0 - q)]
                .iter()
                .filter(|(a, _)| *a > 0.0)
                .map(|(a, b)| a * (a / b).ln())
                .sum::<f64>();
            DualCandidate { weights: vec![p, 1.0 - p], penalty: kl / tau }
        })
        .collect()
}

#[test]
fn kl_dual_grid_converges_up_to_entropic() {
    let (q, tau) = (0.3, 2.0);
    let loss = [1.5, -0.5];
    let exact = entropic_risk(&FiniteDistribution::new(loss.to_vec(), vec![q, 1.0 - q]).unwrap(), tau).unwrap();
    let mut last = f64::NEG_INFINITY;
    // nested grids: each refines the previous
    for n in [2, 4, 8, 16, 32, 64, 128, 256, 512, 1024] {
        let r = finite_dual_risk(&loss, &kl_grid(q, tau, n)).unwrap();
        assert!(r >= last - 1e-15, "grid {n}: {r} < {last}");
        assert!(r <= exact + 1e-12);
        last = r;
    }
    assert!(exact - last < 1e-5, "{exact} vs {last}");
}
