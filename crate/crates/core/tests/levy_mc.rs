mod common;

use carma_levy_core::levy::{
    gamma_cdf, gamma_fisher_information, gamma_logpdf, gamma_score, gamma_score_jacobian,
    sample_gamma,
};
use carma_levy_core::special::ln_gamma;
use carma_levy_core::stats::{ks_two_sample, ks_two_sample_critical_1pct};
use carma_levy_core::{DMatrix, DVector, JumpLaw, LevySpec};
use proptest::prelude::*;

fn draws(spec: &LevySpec, dt: f64, n: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = common::rng(seed);
    (0..n).map(|_| spec.sample_increment(dt, &mut rng)).collect()
}

fn scalar_draws(spec: &LevySpec, dt: f64, n: usize, seed: u64) -> Vec<f64> {
    draws(spec, dt, n, seed).into_iter().map(|v| v[0]).collect()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

proptest! {
    #[test]
    fn gamma_cdf_is_monotone(b in 0.1..5.0f64, a in 0.05..5.0f64, x in 0.0..20.0f64, dx in 0.0..5.0f64) {
        let (lo, hi) = (gamma_cdf(x, b, a), gamma_cdf(x + dx, b, a));
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!(hi >= lo - 1e-15);
    }

    #[test]
    fn score_is_the_gradient_of_the_log_density(b in 0.2..5.0f64, a in 0.2..5.0f64, x in 0.01..20.0f64) {
        let eps = 1e-6;
        let db = (gamma_logpdf(x, b + eps, a) - gamma_logpdf(x, b - eps, a)) / (2.0 * eps);
        let da = (gamma_logpdf(x, b, a + eps) - gamma_logpdf(x, b, a - eps)) / (2.0 * eps);
        let s = gamma_score(x, b, a);
        prop_assert!((s[0] - db).abs() < 1e-5 * (1.0 + db.abs()));
        prop_assert!((s[1] - da).abs() < 1e-5 * (1.0 + da.abs()));
    }

    #[test]
    fn hessian_matches_score_differences(b in 0.2..5.0f64, a in 0.2..5.0f64, x in 0.01..20.0f64) {
        let eps = 1e-6;
        let j = gamma_score_jacobian(x, b, a);
        let (sb1, sb0) = (gamma_score(x, b + eps, a), gamma_score(x, b - eps, a));
        let (sa1, sa0) = (gamma_score(x, b, a + eps), gamma_score(x, b, a - eps));
        for r in 0..2 {
            let fd_b = (sb1[r] - sb0[r]) / (2.0 * eps);
            let fd_a = (sa1[r] - sa0[r]) / (2.0 * eps);
            prop_assert!((j[r][0] - fd_b).abs() < 1e-5 * (1.0 + fd_b.abs()));
            prop_assert!((j[r][1] - fd_a).abs() < 1e-5 * (1.0 + fd_a.abs()));
        }
    }
}

#[test]
fn gamma_increment_moments() {
    let spec = LevySpec::gamma(2.0, 1.0).unwrap();
    for (dt, seed) in [(1.0, 1), (0.1, 2), (0.01, 3)] {
        let n = 200_000;
        let x = scalar_draws(&spec, dt, n, seed);
        assert!(x.iter().all(|&v| v >= 0.0));
        let (m, v) = mean_var(&x);
        // shape a·dt, scale b: mean 2dt, variance 4dt
        let se = (4.0 * dt / n as f64).sqrt();
        assert!((m - 2.0 * dt).abs() < 5.0 * se, "dt = {dt}: mean {m}");
        // relative standard error of a sample variance: sqrt((excess kurtosis + 2) / n)
        let rel_se = ((6.0 / dt + 2.0) / n as f64).sqrt();
        assert!((v / (4.0 * dt) - 1.0).abs() < 4.0 * rel_se, "dt = {dt}: variance {v}");
    }
}

#[test]
fn gamma_raw_moments() {
    // E X^k = b^k Γ(a + k) / Γ(a)
    let (b, a) = (0.7, 2.5);
    let mut rng = common::rng(9);
    let n = 400_000;
    let x: Vec<f64> = (0..n).map(|_| b * sample_gamma(&mut rng, a)).collect();
    for k in 1..=3 {
        let emp = x.iter().map(|v| v.powi(k)).sum::<f64>() / n as f64;
        let exact = b.powi(k) * (ln_gamma(a + k as f64) - ln_gamma(a)).exp();
        assert!((emp / exact - 1.0).abs() < 0.02, "k = {k}: {emp} vs {exact}");
    }
}

#[test]
fn small_shape_gamma_sampler() {
    let mut rng = common::rng(21);
    let a = 0.05;
    let n = 200_000;
    let x: Vec<f64> = (0..n).map(|_| sample_gamma(&mut rng, a)).collect();
    assert!(x.iter().all(|&v| v >= 0.0 && v.is_finite()));
    let (m, v) = mean_var(&x);
    assert!((m - a).abs() < 5.0 * (a / n as f64).sqrt());
    assert!((v / a - 1.0).abs() < 0.1);
}

#[test]
fn increments_add_up_in_distribution() {
    // ten increments over dt = 0.1 versus one over a unit interval
    for spec in [
        LevySpec::gamma(2.0, 1.0).unwrap(),
        LevySpec::compound_poisson(
            3.0,
            JumpLaw::Normal {
                mean: 0.5,
                std_dev: 1.0,
            },
        )
        .unwrap(),
    ] {
        let n = 5000;
        let fine = scalar_draws(&spec, 0.1, 10 * n, 31);
        let summed: Vec<f64> = fine.chunks(10).map(|c| c.iter().sum()).collect();
        let unit = scalar_draws(&spec, 1.0, n, 32);
        let d = ks_two_sample(&summed, &unit);
        assert!(d < ks_two_sample_critical_1pct(n, n), "{d}");
    }
}

#[test]
fn score_has_zero_mean_and_information_identity() {
    let (b, a) = (2.0, 1.0);
    let mut rng = common::rng(13);
    let n = 400_000;
    let mut mean = [0.0; 2];
    let mut outer = DMatrix::<f64>::zeros(2, 2);
    let mut hess = DMatrix::<f64>::zeros(2, 2);
    for _ in 0..n {
        let x = b * sample_gamma(&mut rng, a);
        let s = gamma_score(x, b, a);
        let j = gamma_score_jacobian(x, b, a);
        for r in 0..2 {
            mean[r] += s[r] / n as f64;
            for c in 0..2 {
                outer[(r, c)] += s[r] * s[c] / n as f64;
                hess[(r, c)] += j[r][c] / n as f64;
            }
        }
    }
    let info = gamma_fisher_information(b, a);
    for r in 0..2 {
        let se = (info[(r, r)] / n as f64).sqrt();
        assert!(mean[r].abs() < 5.0 * se, "score mean {mean:?}");
    }
    assert!((&outer - &info).norm() < 0.03 * info.norm(), "{outer}");
    assert!((&hess + &info).norm() < 0.03 * info.norm(), "{hess}");
}

#[test]
fn compound_poisson_moments_match_triplet() {
    let spec = LevySpec::compound_poisson(
        2.0,
        JumpLaw::Normal {
            mean: 1.0,
            std_dev: 0.5,
        },
    )
    .unwrap();
    let x = scalar_draws(&spec, 1.0, 200_000, 41);
    let (m, v) = mean_var(&x);
    let t = spec.triplet();
    assert!((t.mean()[0] - 2.0).abs() < 1e-12);
    // rate · E J² = 2 · 1.25
    assert!((t.covariance()[(0, 0)] - 2.5).abs() < 1e-12);
    assert!((m - 2.0).abs() < 0.02);
    assert!((v / 2.5 - 1.0).abs() < 0.03);
}

#[test]
fn brownian_covariance() {
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0]);
    let drift = DVector::from_vec(vec![0.5, -1.0]);
    let spec = LevySpec::brownian_drift(drift.clone(), cov.clone()).unwrap();
    let dt = 0.25;
    let rows = draws(&spec, dt, 200_000, 51);
    let m = carma_levy_core::stats::mean(&rows);
    let c = carma_levy_core::stats::covariance(&rows);
    assert!((m - &drift * dt).norm() < 0.01);
    assert!((c - &cov * dt).norm() < 0.02);
    let t = spec.triplet();
    assert_eq!(t.gaussian_cov, cov);
}

#[test]
fn drift_only_is_deterministic() {
    let spec = LevySpec::drift_only(DVector::from_vec(vec![1.5])).unwrap();
    let x = scalar_draws(&spec, 0.2, 10, 0);
    assert!(x.iter().all(|&v| (v - 0.3).abs() < 1e-15));
}
