//! Summary statistics and goodness-of-fit tests used to check simulated output.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::special::normal_cdf;

/// Sample mean of row vectors.
pub fn mean(rows: &[DVector<f64>]) -> DVector<f64> {
    let dim = rows.first().map_or(0, |r| r.len());
    let mut acc = DVector::zeros(dim);
    for r in rows {
        acc += r;
    }
    acc / rows.len().max(1) as f64
}

/// Unbiased sample covariance (divisor `n - 1`).
pub fn covariance(rows: &[DVector<f64>]) -> DMatrix<f64> {
    let dim = rows.first().map_or(0, |r| r.len());
    let mu = mean(rows);
    let mut acc = DMatrix::zeros(dim, dim);
    for r in rows {
        let c = r - &mu;
        acc += &c * c.transpose();
    }
    acc / (rows.len().max(2) - 1) as f64
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Kolmogorov distance `sup_x |F_n(x) - F(x)|` between the empirical CDF of
/// `sample` and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let s = sorted(sample);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        let lo = f - i as f64 / n;
        let hi = (i + 1) as f64 / n - f;
        d.max(lo).max(hi)
    })
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic 1% critical value of the two-sample statistic.
pub fn ks_two_sample_critical_1pct(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.628 * Float::sqrt((n + m) / (n * m))
}

/// Anderson–Darling statistic for normality with estimated mean and
/// variance, including the small-sample factor `1 + 0.75/n + 2.25/n²`.
pub fn anderson_darling_normal(sample: &[f64]) -> f64 {
    let n = sample.len();
    let nf = n as f64;
    let mu = sample.iter().sum::<f64>() / nf;
    let var = sample.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (nf - 1.0);
    let sd = Float::sqrt(var);
    let z: Vec<f64> = sorted(sample).iter().map(|x| (x - mu) / sd).collect();
    let mut acc = 0.0;
    for i in 0..n {
        let lo = normal_cdf(z[i]).clamp(1e-300, 1.0);
        let hi = (1.0 - normal_cdf(z[n - 1 - i])).clamp(1e-300, 1.0);
        acc += (2 * i + 1) as f64 * (Float::ln(lo) + Float::ln(hi));
    }
    let a2 = -nf - acc / nf;
    a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf))
}

/// 1% critical value for [`anderson_darling_normal`].
pub const AD_NORMAL_CRITICAL_1PCT: f64 = 1.035;
