mod common;

use carma_levy_core::recovery::{forward_difference, trapezoid, trapezoid_weighted, xq_recursion};
use carma_levy_core::{
    build_state_space, recover_increments, sample, simulate, DMatrix, DVector, LevySpec,
    RecoveryConfig, SampledSeries, SimulationOptions,
};
use proptest::prelude::*;
use rand::Rng;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn poly_at(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

proptest! {
    #[test]
    fn forward_difference_exact_on_polynomials(
        nu in 0usize..=4,
        lower in 0usize..=4,
        coeffs in prop::collection::vec(-1.0..1.0f64, 5),
        hi in 0usize..3,
        t0 in -1.0..1.0f64,
    ) {
        let h = [0.5, 0.25, 0.1][hi];
        // degree ν, or lower
        let deg = nu.saturating_sub(lower % (nu + 1));
        let c = &coeffs[..=deg];
        let values: Vec<f64> = (0..nu + 3).map(|i| poly_at(c, t0 + i as f64 * h)).collect();
        let got = forward_difference(&values, 1, nu, h, 2).unwrap()[0];
        let expect = if deg == nu { factorial(nu) * c[nu] } else { 0.0 };
        prop_assert!((got - expect).abs() < 1e-10, "ν = {nu}, deg = {deg}: {got} vs {expect}");
    }

    #[test]
    fn trapezoid_exact_on_linear(a in -5.0..5.0f64, b in -5.0..5.0f64, k in 1usize..50) {
        let h = 1.0 / k as f64;
        let seg: Vec<f64> = (0..=k).map(|i| a + b * i as f64 * h).collect();
        let got = trapezoid(&seg, 1, h).unwrap()[0];
        prop_assert!((got - (a + b / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn weighted_trapezoid_with_identity_kernel(k in 1usize..20, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let h = 1.0 / k as f64;
        let seg: Vec<f64> = (0..2 * (k + 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kernel = vec![DMatrix::identity(2, 2); k + 1];
        let plain = trapezoid(&seg, 2, h).unwrap();
        let weighted = trapezoid_weighted(&seg, 2, h, &kernel).unwrap();
        prop_assert!((plain - weighted).norm() < 1e-14);
    }
}

#[test]
fn trapezoid_error_on_square() {
    for k in [4usize, 10, 100] {
        let h = 1.0 / k as f64;
        let seg: Vec<f64> = (0..=k).map(|i| (i as f64 * h).powi(2)).collect();
        let err = trapezoid(&seg, 1, h).unwrap()[0] - 1.0 / 3.0;
        let expect = 1.0 / (6.0 * (k * k) as f64);
        assert!((err - expect).abs() < 1e-12, "K = {k}: {err} vs {expect}");
    }
}

#[test]
fn study_model_recovery_coefficients() {
    let ssr = build_state_space(&common::study_model()).unwrap();
    assert_eq!(ssr.lookahead(), 1);
    let kd = ssr.k_deriv();
    assert_eq!(kd.len(), 2);
    assert!((kd[0][(0, 0)] - 1.0).abs() < 1e-12);
    assert!((kd[1][(0, 0)] - 1.0).abs() < 1e-12);
    assert!(ssr.k_state()[(0, 0)].abs() < 1e-12);
    assert!((ssr.k_int()[(0, 0)] - 0.5).abs() < 1e-12);
    assert!((ssr.bbold()[(0, 0)] + 1.0).abs() < 1e-12);
}

fn random_series<R: Rng>(rng: &mut R, h: f64, n_units: usize, lookahead: usize, d: usize) -> SampledSeries {
    let len = n_units * (1.0 / h).round() as usize + lookahead + 1;
    let values = (0..len * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    SampledSeries::new(h, n_units, lookahead, d, values).unwrap()
}

#[test]
fn recovery_is_linear_in_the_observations() {
    let mut rng = common::rng(11);
    for trial in 0..5 {
        let model = common::random_model(&mut rng, 3 + trial % 2, 1 + trial % 2, 1 + trial % 2);
        let ssr = build_state_space(&model).unwrap();
        let (h, n) = (0.05, 6);
        let a = random_series(&mut rng, h, n, ssr.lookahead(), ssr.d());
        let b = random_series(&mut rng, h, n, ssr.lookahead(), ssr.d());
        let (ca, cb) = (1.7, -0.4);
        let mixed: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| ca * x + cb * y).collect();
        let mixed = SampledSeries::new(h, n, ssr.lookahead(), ssr.d(), mixed).unwrap();
        let cfg = RecoveryConfig::default();
        let ra = recover_increments(&ssr, &a, &cfg).unwrap().increments;
        let rb = recover_increments(&ssr, &b, &cfg).unwrap().increments;
        let rm = recover_increments(&ssr, &mixed, &cfg).unwrap().increments;
        for ((x, y), z) in ra.as_slice().iter().zip(rb.as_slice()).zip(rm.as_slice()) {
            assert!((ca * x + cb * y - z).abs() < 1e-9 * (1.0 + z.abs()));
        }
    }
}

#[test]
fn initial_state_error_decays() {
    let mut rng = common::rng(5);
    let model = common::random_model(&mut rng, 3, 2, 1);
    let ssr = build_state_space(&model).unwrap();
    let series = random_series(&mut rng, 0.1, 30, ssr.lookahead(), ssr.d());
    let zero = xq_recursion(&ssr, &series, &RecoveryConfig::default()).unwrap();
    let cfg = RecoveryConfig {
        xq0: Some(DVector::from_vec(vec![3.0, -2.0])),
        diagnostics: false,
    };
    let off = xq_recursion(&ssr, &series, &cfg).unwrap();
    let gap: Vec<f64> = zero.iter().zip(&off).map(|(a, b)| (a - b).norm()).collect();
    assert!(gap[30] < 1e-3 * gap[0], "{:?}", gap);
    let rec0 = recover_increments(&ssr, &series, &RecoveryConfig::default()).unwrap();
    let rec1 = recover_increments(&ssr, &series, &cfg).unwrap();
    let late = (rec0.increments.get(29)[0] - rec1.increments.get(29)[0]).abs();
    assert!(late < 1e-3 * gap[0]);
}

#[test]
fn diagnostics_terms_add_up() {
    let mut rng = common::rng(8);
    let ssr = build_state_space(&common::study_model()).unwrap();
    let series = random_series(&mut rng, 0.1, 5, ssr.lookahead(), 1);
    let cfg = RecoveryConfig {
        xq0: None,
        diagnostics: true,
    };
    let out = recover_increments(&ssr, &series, &cfg).unwrap();
    let terms = out.terms.unwrap();
    assert_eq!(terms.len(), 5);
    for (n, t) in terms.iter().enumerate() {
        let total = &t.differences + &t.state + &t.integral;
        assert!((total[0] - out.increments.get(n)[0]).abs() < 1e-15);
    }
}

#[test]
fn drift_only_driver_is_recovered() {
    let model = common::study_model();
    let ssr = build_state_space(&model).unwrap();
    let levy = LevySpec::drift_only(DVector::from_vec(vec![1.0])).unwrap();
    let mut rng = common::rng(0);
    let path = simulate(&model, &ssr, &levy, 21.0, 1e-3, &SimulationOptions::default(), &mut rng).unwrap();
    let series = sample(&path, 0.01, 20).unwrap();
    let rec = recover_increments(&ssr, &series, &RecoveryConfig::default()).unwrap();
    for n in 10..=20 {
        let x = rec.increments.get(n - 1)[0];
        assert!((x - 1.0).abs() <= 5e-3, "n = {n}: {x}");
    }
}

#[test]
fn too_short_series_is_rejected() {
    let ssr = build_state_space(&common::study_model()).unwrap();
    let series = SampledSeries::new(0.1, 2, 0, 1, vec![0.0; 21]).unwrap();
    assert!(recover_increments(&ssr, &series, &RecoveryConfig::default()).is_err());
}
