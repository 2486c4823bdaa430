use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rqre_core::linear_fa::*;

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = norm(&v);
    v.iter().map(|x| x / n).collect()
}

fn random_ball(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let r: f64 = rng.gen();
    random_unit(rng, d).into_iter().map(|x| x * r).collect()
}

#[test]
fn incremental_gram_matches_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (d, lambda) = (8, 0.5);
    let mut design = RidgeDesign::new(d, 2, lambda).unwrap();
    let mut batch = DMatrix::identity(d, d) * lambda;
    for _ in 0..1000 {
        let phi = random_ball(&mut rng, d);
        design.update(&phi, &[rng.gen(), rng.gen()]).unwrap();
        let v = nalgebra::DVector::from_column_slice(&phi);
        batch += &v * v.transpose();
    }
    assert!((design.gram() - &batch).norm() < 1e-10);
    assert_eq!(design.count(), 1000);
    design.validate().unwrap();
}

#[test]
fn weights_solve_the_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = 6;
    let mut design = RidgeDesign::new(d, 1, 1.0).unwrap();
    for _ in 0..50 {
        let phi = random_ball(&mut rng, d);
        design.update(&phi, &[rng.gen_range(0.0..3.0)]).unwrap();
    }
    let w = nalgebra::DVector::from_vec(design.weights(0));
    let rhs = design.target_sum(0);
    let residual = (design.gram() * &w - rhs).norm() / rhs.norm();
    assert!(residual <= 1e-10, "relative residual {residual:e}");
}

#[test]
fn weights_vanish_for_zero_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut design = RidgeDesign::new(4, 1, 1.0).unwrap();
    for _ in 0..10 {
        design.update(&random_ball(&mut rng, 4), &[0.0]).unwrap();
    }
    assert!(design.weights(0).iter().all(|&w| w == 0.0));
}

#[test]
fn tiny_ridge_recovers_generating_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = 5;
    let truth = random_ball(&mut rng, d);
    let mut design = RidgeDesign::new(d, 1, 1e-8).unwrap();
    for _ in 0..d {
        let phi = random_ball(&mut rng, d);
        let y = dot(&phi, &truth);
        design.update(&phi, &[y]).unwrap();
    }
    let w = design.weights(0);
    let err: f64 = w.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(err <= 1e-4, "recovery error {err:e}");
}

#[test]
fn bonus_after_repeated_direction() {
    let e1 = [1.0, 0.0, 0.0];
    let mut design = RidgeDesign::new(3, 1, 1.0).unwrap();
    assert!((design.bonus(&e1, 0.1) - 0.1).abs() < 1e-15);
    let mut absorbed = 0;
    for k in [1usize, 10, 100] {
        while absorbed < k {
            design.update(&e1, &[0.0]).unwrap();
            absorbed += 1;
        }
        let expected = 0.1 / ((1 + k) as f64).sqrt();
        assert!((design.bonus(&e1, 0.1) - expected).abs() < 1e-12, "k = {k}");
    }
}

#[test]
fn stage_value_cap_formula() {
    let cap = value_cap(2, &[2, 2], &[1.0, 1.0]);
    assert!((cap - 2.0 * (1.0 + 2f64.ln())).abs() < 1e-12);
    assert!((cap - 3.38629).abs() < 1e-5);
}

#[test]
fn potential_of_random_directions_within_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (d, k) = (5, 10_000);
    let mut audit = EllipticalAudit::new(d, 1.0);
    for _ in 0..k {
        audit.record(&random_unit(&mut rng, d));
    }
    let report = audit.report();
    assert!((report.bound - 2.0 * 5.0 * (1.0 + 1e4f64).ln()).abs() < 1e-9);
    assert!((report.bound - 92.1).abs() < 0.05);
    assert!(report.passes(), "{report:?}");
}

#[test]
fn empty_potential_trace_passes() {
    let report = EllipticalAudit::new(3, 1.0).report();
    assert_eq!(report.cumulative, 0.0);
    assert!(report.passes());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smallest_eigenvalue_stays_above_lambda(seed in any::<u64>(), lambda in 0.01f64..5.0, n in 0usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 6;
        let mut design = RidgeDesign::new(d, 1, lambda).unwrap();
        for _ in 0..n {
            design.update(&random_ball(&mut rng, d), &[1.0]).unwrap();
        }
        prop_assert!(design.validate().is_ok());
        let min = design.gram().clone().symmetric_eigenvalues().min();
        prop_assert!(min >= lambda - 1e-9);
    }

    #[test]
    fn more_data_never_raises_the_bonus(seed in any::<u64>(), extra in 1usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 5;
        let mut design = RidgeDesign::new(d, 1, 1.0).unwrap();
        for _ in 0..20 {
            design.update(&random_ball(&mut rng, d), &[0.0]).unwrap();
        }
        let probes: Vec<Vec<f64>> = (0..20).map(|_| random_ball(&mut rng, d)).collect();
        let before: Vec<f64> = probes.iter().map(|p| design.bonus(p, 0.3)).collect();
        for _ in 0..extra {
            design.update(&random_ball(&mut rng, d), &[0.0]).unwrap();
        }
        for (p, b) in probes.iter().zip(before) {
            prop_assert!(design.bonus(p, 0.3) <= b + 1e-12);
        }
    }

    #[test]
    fn q_estimate_stays_in_range(seed in any::<u64>(), beta in 0.0f64..5.0, scale in -10.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 4;
        let hyper = OviHyper::auto(beta, 1.0, 3, &[2, 3], &[1.0, 0.5]);
        let mut design = RidgeDesign::new(d, 2, 1.0).unwrap();
        for _ in 0..30 {
            design.update(&random_ball(&mut rng, d), &[scale * rng.gen::<f64>(), -scale]).unwrap();
        }
        let fitted = design.fit().unwrap();
        for _ in 0..20 {
            let phi = random_ball(&mut rng, d);
            for i in 0..2 {
                let q = fitted.q_estimate(i, &phi, &hyper);
                prop_assert!((0.0..=hyper.b_clip).contains(&q));
                prop_assert!((q - q_estimate(&design, i, &phi, &hyper)).abs() < 1e-9);
            }
        }
    }
}
