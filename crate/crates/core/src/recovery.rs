//! Reconstruction of the driving process's unit increments from a sampled
//! output path.
//!
//! Derivatives of `Y` are replaced by forward differences on the sampling
//! grid, integrals over unit intervals by the composite trapezoidal rule, and
//! the truncated state `X_q` is propagated by its exact AR(1) recursion with a
//! trapezoidal innovation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::carma::{SampledSeries, StateSpaceRealization};
use crate::error::{Error, Result};
use crate::levy::IncrementSample;
use crate::matpoly::expm;

/// `h^{-ν} Σ_{i=0}^{ν} (-1)^{ν-i} C(ν, i) f(t + ih)` with `f(t)` stored at
/// `values[start*dim..]` (row-major, one `dim`-vector per grid point).
pub fn forward_difference(
    values: &[f64],
    dim: usize,
    nu: usize,
    h: f64,
    start: usize,
) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(dim);
    forward_difference_into(values, dim, nu, h, start, out.as_mut_slice())?;
    Ok(out)
}

fn forward_difference_into(
    values: &[f64],
    dim: usize,
    nu: usize,
    h: f64,
    start: usize,
    out: &mut [f64],
) -> Result<()> {
    let available = values.len() / dim;
    if start + nu >= available {
        return Err(Error::InsufficientSamples {
            needed: start + nu + 1,
            available,
        });
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    let mut binom = 1.0;
    for i in 0..=nu {
        let sign = if (nu - i).is_multiple_of(2) { 1.0 } else { -1.0 };
        let w = sign * binom;
        let f = &values[(start + i) * dim..(start + i + 1) * dim];
        for (o, x) in out.iter_mut().zip(f) {
            *o += w * x;
        }
        binom = binom * (nu - i) as f64 / (i + 1) as f64;
    }
    let scale = Float::powi(h, -(nu as i32));
    out.iter_mut().for_each(|o| *o *= scale);
    Ok(())
}

fn intervals(h: f64) -> Result<usize> {
    let k = Float::round(1.0 / h);
    if !(h > 0.0) || k < 1.0 || (k * h - 1.0).abs() > 1e-9 {
        return Err(Error::Grid(format!("1/h must be a positive integer, got h = {h}")));
    }
    Ok(k as usize)
}

/// Composite trapezoidal rule on a unit interval sampled at spacing `h`:
/// `h [f_0/2 + f_1 + … + f_{K-1} + f_K/2]` with `K = 1/h`.
pub fn trapezoid(segment: &[f64], dim: usize, h: f64) -> Result<DVector<f64>> {
    let k = intervals(h)?;
    check_segment(segment, dim, k)?;
    let mut out = DVector::zeros(dim);
    for (i, f) in segment.chunks_exact(dim).enumerate() {
        let w = if i == 0 || i == k { 0.5 * h } else { h };
        for (o, x) in out.iter_mut().zip(f) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// Trapezoidal rule for `∫ g(s) f(s) ds` over a unit interval, with the
/// matrix-valued kernel given at the `K + 1` nodes (`kernel[i]` multiplies the
/// `i`-th sample).
pub fn trapezoid_weighted(
    segment: &[f64],
    dim: usize,
    h: f64,
    kernel: &[DMatrix<f64>],
) -> Result<DVector<f64>> {
    let k = intervals(h)?;
    check_segment(segment, dim, k)?;
    if kernel.len() != k + 1 {
        return Err(Error::Dimension {
            context: "trapezoid kernel nodes",
            expected: k + 1,
            found: kernel.len(),
        });
    }
    let rows = kernel[0].nrows();
    let mut out = DVector::zeros(rows);
    for (i, (f, g)) in segment.chunks_exact(dim).zip(kernel).enumerate() {
        let w = if i == 0 || i == k { 0.5 * h } else { h };
        out.gemv(w, g, &DVector::from_column_slice(f), 1.0);
    }
    Ok(out)
}

fn check_segment(segment: &[f64], dim: usize, k: usize) -> Result<()> {
    if dim == 0 || segment.len() != (k + 1) * dim {
        return Err(Error::Dimension {
            context: "trapezoid segment",
            expected: (k + 1) * dim,
            found: segment.len(),
        });
    }
    Ok(())
}

/// Options for [`recover_increments`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecoveryConfig {
    /// `X̂_q(0)` (length `qm`); zero when absent.
    pub xq0: Option<DVector<f64>>,
    /// Keep the three additive terms of every estimate.
    pub diagnostics: bool,
}

/// The three additive terms of one increment estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryTerms {
    /// `Σ_ν K_ν (Δ_h^ν Y(n) - Δ_h^ν Y(n-1))`.
    pub differences: DVector<f64>,
    /// `K_X (X̂_q(n) - X̂_q(n-1))`.
    pub state: DVector<f64>,
    /// `K_I T_{[n-1,n]} Y`.
    pub integral: DVector<f64>,
}

/// Estimated increments `ΔL̂_1, …, ΔL̂_N` and the propagated `X̂_q(0..=N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryOutput {
    pub increments: IncrementSample,
    pub xq_path: Vec<DVector<f64>>,
    pub terms: Option<Vec<RecoveryTerms>>,
}

fn check_series(ssr: &StateSpaceRealization, series: &SampledSeries) -> Result<()> {
    if series.dim() != ssr.d() {
        return Err(Error::Dimension {
            context: "series dimension",
            expected: ssr.d(),
            found: series.dim(),
        });
    }
    if series.lookahead() < ssr.lookahead() {
        return Err(Error::InsufficientSamples {
            needed: series.n_units() * series.per_unit() + ssr.lookahead() + 1,
            available: series.len(),
        });
    }
    Ok(())
}

/// `e^{𝐁 jh} E_q` for `j = 0..=1/h`.
fn kernel_table(ssr: &StateSpaceRealization, h: f64, k: usize) -> Vec<DMatrix<f64>> {
    let step = expm(&(ssr.bbold() * h));
    let mut table = Vec::with_capacity(k + 1);
    let mut acc = ssr.eq().clone();
    for j in 0..=k {
        if j == k {
            // anchor the far end to e^𝐁 so rounding does not accumulate into the recursion
            acc = ssr.expm_bbold() * ssr.eq();
        }
        table.push(acc.clone());
        acc = &step * &acc;
    }
    table
}

/// `X̂_q(n) = e^𝐁 X̂_q(n-1) + T_{[n-1,n]}[e^{𝐁(n-·)} E_q Y]` for `n = 1..=N`.
pub fn xq_recursion(
    ssr: &StateSpaceRealization,
    series: &SampledSeries,
    cfg: &RecoveryConfig,
) -> Result<Vec<DVector<f64>>> {
    check_series(ssr, series)?;
    let qm = ssr.q() * ssr.m();
    let x0 = initial_xq(cfg, qm)?;
    let k = series.per_unit();
    // node i of [n-1, n] sits at n - s = 1 - ih
    let kernel: Vec<DMatrix<f64>> = kernel_table(ssr, series.h(), k).into_iter().rev().collect();
    let d = series.dim();
    let mut path = Vec::with_capacity(series.n_units() + 1);
    path.push(x0);
    for n in 1..=series.n_units() {
        let seg = &series.as_slice()[(n - 1) * k * d..(n * k + 1) * d];
        let innovation = trapezoid_weighted(seg, d, series.h(), &kernel)?;
        let next = ssr.expm_bbold() * &path[n - 1] + innovation;
        path.push(next);
    }
    Ok(path)
}

fn initial_xq(cfg: &RecoveryConfig, qm: usize) -> Result<DVector<f64>> {
    match &cfg.xq0 {
        Some(x) if x.len() != qm => Err(Error::Dimension {
            context: "initial truncated state",
            expected: qm,
            found: x.len(),
        }),
        Some(x) => Ok(x.clone()),
        None => Ok(DVector::zeros(qm)),
    }
}

/// Estimates the unit increments of the driver:
///
/// ```text
/// ΔL̂_n = Σ_ν K_ν (Δ_h^ν Y(n) - Δ_h^ν Y(n-1)) + K_X (X̂_q(n) - X̂_q(n-1)) + K_I T_{[n-1,n]} Y
/// ```
///
/// for `n = 1..=N`, with `ν` running over `0..p-q`.
pub fn recover_increments(
    ssr: &StateSpaceRealization,
    series: &SampledSeries,
    cfg: &RecoveryConfig,
) -> Result<RecoveryOutput> {
    let xq_path = xq_recursion(ssr, series, cfg)?;
    let (m, d) = (ssr.m(), ssr.d());
    let k = series.per_unit();
    let h = series.h();
    let orders = ssr.p() - ssr.q();
    let values = series.as_slice();

    // Δ_h^ν Y at unit times 0..=N
    let mut diffs: Vec<Vec<DVector<f64>>> = Vec::with_capacity(orders);
    for nu in 0..orders {
        let mut row = Vec::with_capacity(series.n_units() + 1);
        for n in 0..=series.n_units() {
            row.push(forward_difference(values, d, nu, h, n * k)?);
        }
        diffs.push(row);
    }

    let mut out = Vec::with_capacity(series.n_units() * m);
    let mut terms = cfg.diagnostics.then(Vec::new);
    for n in 1..=series.n_units() {
        let mut dterm = DVector::zeros(m);
        for (nu, row) in diffs.iter().enumerate() {
            dterm += &ssr.k_deriv()[nu] * (&row[n] - &row[n - 1]);
        }
        let sterm = ssr.k_state() * (&xq_path[n] - &xq_path[n - 1]);
        let seg = &values[(n - 1) * k * d..(n * k + 1) * d];
        let iterm = ssr.k_int() * trapezoid(seg, d, h)?;
        let total = &dterm + &sterm + &iterm;
        out.extend_from_slice(total.as_slice());
        if let Some(t) = terms.as_mut() {
            t.push(RecoveryTerms {
                differences: dterm,
                state: sterm,
                integral: iterm,
            });
        }
    }
    Ok(RecoveryOutput {
        increments: IncrementSample::new(m, 1.0, out)?,
        xq_path,
        terms,
    })
}

/// Upper state blocks `X̂^{(q+j)}(n)`, `j = 1..=p-q`, rebuilt from `X̂_q(n)` and
/// forward differences of `Y` at unit time `n`:
///
/// ```text
/// X̂^{(q+j)}(n) = S [𝐁^j X̂_q(n) + Σ_{ν<j} 𝐁^{j-1-ν} E_q Δ_h^ν Y(n)]
/// ```
pub fn recover_state_blocks(
    ssr: &StateSpaceRealization,
    series: &SampledSeries,
    xq_path: &[DVector<f64>],
    n: usize,
) -> Result<Vec<DVector<f64>>> {
    check_series(ssr, series)?;
    let xq = xq_path.get(n).ok_or(Error::InsufficientSamples {
        needed: n + 1,
        available: xq_path.len(),
    })?;
    let orders = ssr.p() - ssr.q();
    let start = n * series.per_unit();
    let diffs = (0..orders)
        .map(|nu| forward_difference(series.as_slice(), series.dim(), nu, series.h(), start))
        .collect::<Result<Vec<_>>>()?;
    let mut blocks = Vec::with_capacity(orders);
    for j in 1..=orders {
        let mut acc = ssr.bbold_power(j) * xq;
        for (nu, dy) in diffs.iter().enumerate().take(j) {
            acc += ssr.bbold_power(j - 1 - nu) * (ssr.eq() * dy);
        }
        blocks.push(ssr.selector() * acc);
    }
    Ok(blocks)
}

/// Mean absolute recovery error `(1/N) Σ ‖ΔL̂_n - ΔL_n‖`.
pub fn mean_abs_error(estimate: &IncrementSample, truth: &IncrementSample) -> Result<f64> {
    if estimate.dim() != truth.dim() || estimate.len() != truth.len() {
        return Err(Error::Dimension {
            context: "recovered vs true increments",
            expected: truth.as_slice().len(),
            found: estimate.as_slice().len(),
        });
    }
    let mut acc = 0.0;
    let mut buf = vec![0.0; estimate.dim()];
    for (a, b) in estimate.iter().zip(truth.iter()) {
        for ((o, x), y) in buf.iter_mut().zip(a).zip(b) {
            *o = x - y;
        }
        acc += Float::sqrt(buf.iter().map(|v| v * v).sum::<f64>());
    }
    Ok(acc / estimate.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_difference_examples() {
        let h = 0.1;
        let grid: Vec<f64> = (0..10).map(|i| i as f64 * h).collect();
        let sq: Vec<f64> = grid.iter().map(|t| t * t).collect();
        let d2 = forward_difference(&sq, 1, 2, h, 3).unwrap();
        assert!((d2[0] - 2.0).abs() < 1e-10);
        let cube: Vec<f64> = grid.iter().map(|t| t * t * t).collect();
        let err = forward_difference(&cube, 1, 2, h, 8).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { needed: 11, .. }));
        let d2 = forward_difference(&cube, 1, 2, h, 0).unwrap();
        assert!((d2[0] - 6.0 * h).abs() < 1e-10);
        assert_eq!(forward_difference(&sq, 1, 0, h, 4).unwrap()[0], sq[4]);
    }

    #[test]
    fn trapezoid_examples() {
        let k = 10;
        let h = 1.0 / k as f64;
        let lin: Vec<f64> = (0..=k).map(|i| i as f64 * h).collect();
        assert!((trapezoid(&lin, 1, h).unwrap()[0] - 0.5).abs() < 1e-15);
        let sq: Vec<f64> = lin.iter().map(|s| s * s).collect();
        assert!((trapezoid(&sq, 1, h).unwrap()[0] - 0.335).abs() < 1e-14);
        assert!(trapezoid(&sq[..k], 1, h).is_err());
    }

    #[test]
    fn weighted_trapezoid_exponential_kernel() {
        let k = 100;
        let h = 1.0 / k as f64;
        let ones = vec![1.0; k + 1];
        let kernel: Vec<DMatrix<f64>> = (0..=k)
            .map(|i| DMatrix::from_element(1, 1, Float::exp(-(i as f64) * h)))
            .collect();
        let v = trapezoid_weighted(&ones, 1, h, &kernel).unwrap()[0];
        assert!((v - (1.0 - Float::exp(-1.0))).abs() < 1.6e-5);
    }
}
