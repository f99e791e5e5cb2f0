//! Generalized method of moments.
//!
//! Given moment conditions `g(x, θ) ∈ ℝ^q` with `E g(ΔL, θ₀) = 0`, the
//! estimator minimizes `‖(1/N) Σ g(x_n, θ)‖²_W`. The two-stage variant
//! re-weights with the inverse of the estimated moment covariance, which gives
//! the smallest asymptotic covariance `[Gᵀ Ω⁻¹ G]⁻¹` among all weightings.
//!
//! Positive parameters are optimized on the log scale, interval-constrained
//! ones through a logistic map, so the optimizer never leaves the domain.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix};
use num_traits::Float;

use crate::carma::{SampledSeries, StateSpaceRealization};
use crate::error::{Error, Result};
use crate::levy::{
    gamma_char_exponent, gamma_fisher_information, gamma_score, gamma_score_jacobian,
    IncrementSample,
};
use crate::matpoly::numerical_rank;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::recovery::{recover_increments, RecoveryConfig};
use crate::special::digamma;

/// Admissible range of one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamDomain {
    Real,
    Positive,
    /// Open interval `(lo, hi)`.
    Interval { lo: f64, hi: f64 },
}

impl ParamDomain {
    fn to_theta(self, eta: f64) -> f64 {
        match self {
            ParamDomain::Real => eta,
            ParamDomain::Positive => Float::exp(eta),
            ParamDomain::Interval { lo, hi } => lo + (hi - lo) / (1.0 + Float::exp(-eta)),
        }
    }

    fn to_eta(self, theta: f64) -> Option<f64> {
        match self {
            ParamDomain::Real if theta.is_finite() => Some(theta),
            ParamDomain::Positive if theta > 0.0 && theta.is_finite() => Some(Float::ln(theta)),
            ParamDomain::Interval { lo, hi } if theta > lo && theta < hi => {
                let u = (theta - lo) / (hi - lo);
                Some(Float::ln(u / (1.0 - u)))
            }
            _ => None,
        }
    }
}

/// Moment conditions `g(x, θ)` with their parameter Jacobian.
pub trait MomentFunction {
    /// Number of moment conditions `q`.
    fn moment_dim(&self) -> usize;
    /// Number of parameters `r`.
    fn param_dim(&self) -> usize;
    /// Dimension of one observation.
    fn sample_dim(&self) -> usize;
    fn domain(&self) -> Vec<ParamDomain>;

    /// Whether `x` is in the support the moments are defined on. Other points
    /// are dropped (and counted) before estimation.
    fn admits(&self, _x: &[f64]) -> bool {
        true
    }

    /// Writes `g(x, θ)` into `out` (length `q`).
    fn moments(&self, x: &[f64], theta: &[f64], out: &mut [f64]);

    /// Writes `∇_θ g(x, θ)` (`q×r`) into `out`.
    fn jacobian(&self, x: &[f64], theta: &[f64], out: &mut DMatrix<f64>);

    /// Starting value computed from the admitted observations (row-major).
    fn start(&self, data: &[f64]) -> Result<Vec<f64>>;

    /// `(1/N) Σ g(x_n, θ)` over row-major `data`, summed in storage order.
    fn mean_moments(&self, data: &[f64], theta: &[f64], out: &mut [f64]) {
        let dim = self.sample_dim();
        let mut buf = vec![0.0; out.len()];
        out.iter_mut().for_each(|o| *o = 0.0);
        let n = data.len() / dim;
        for x in data.chunks_exact(dim) {
            self.moments(x, theta, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
    }

    /// Population `(Ω₀, G₀) = (E g gᵀ, E ∇_θ g)` at `θ`, when known in closed form.
    fn population_moments(&self, _theta: &[f64]) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        None
    }
}

/// A parametric family of infinitely divisible laws, described by its
/// characteristic exponent `ψ_θ(u) = log E e^{i⟨u, L(1)⟩}`.
pub trait ParametricFamily {
    fn dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn domain(&self) -> Vec<ParamDomain>;
    fn char_exponent(&self, u: &[f64], theta: &[f64]) -> Complex<f64>;
    /// Writes `∇_θ ψ_θ(u)` (length `r`) into `out`.
    fn char_exponent_gradient(&self, u: &[f64], theta: &[f64], out: &mut [Complex<f64>]);
    /// Starting value from a sample of unit increments (row-major).
    fn start(&self, data: &[f64]) -> Result<Vec<f64>>;
}

/// Gamma law of `L(1)` with parameters `(scale b, shape a)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GammaFamily;

/// Method-of-moments start `b₀ = var/mean`, `a₀ = mean²/var`.
fn gamma_moment_start(data: &[f64]) -> Result<Vec<f64>> {
    let n = data.len() as f64;
    if data.len() < 2 {
        return Err(Error::DegenerateSample(format!(
            "{} observations are too few for a Gamma start",
            data.len()
        )));
    }
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if !(mean > 0.0) || !(var > 0.0) {
        return Err(Error::DegenerateSample(format!(
            "sample mean {mean} and variance {var} admit no Gamma start"
        )));
    }
    Ok(vec![var / mean, mean * mean / var])
}

impl ParametricFamily for GammaFamily {
    fn dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn domain(&self) -> Vec<ParamDomain> {
        vec![ParamDomain::Positive; 2]
    }

    fn char_exponent(&self, u: &[f64], theta: &[f64]) -> Complex<f64> {
        gamma_char_exponent(u[0], theta[0], theta[1])
    }

    fn char_exponent_gradient(&self, u: &[f64], theta: &[f64], out: &mut [Complex<f64>]) {
        let (b, a) = (theta[0], theta[1]);
        let w = Complex::new(1.0, -b * u[0]);
        // ∂_b: i a u / (1 - i b u);  ∂_a: -log(1 - i b u)
        out[0] = Complex::new(0.0, a * u[0]) / w;
        out[1] = -w.ln();
    }

    fn start(&self, data: &[f64]) -> Result<Vec<f64>> {
        gamma_moment_start(data)
    }
}

/// Gamma maximum-likelihood score `g(x, (b, a)) = ∇ log f_{b,a}(x)`.
///
/// Defined on `x > 0` only; other observations are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GammaScore;

impl MomentFunction for GammaScore {
    fn moment_dim(&self) -> usize {
        2
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn sample_dim(&self) -> usize {
        1
    }

    fn domain(&self) -> Vec<ParamDomain> {
        vec![ParamDomain::Positive; 2]
    }

    fn admits(&self, x: &[f64]) -> bool {
        x[0] > 0.0
    }

    fn moments(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        let s = gamma_score(x[0], theta[0], theta[1]);
        out.copy_from_slice(&s);
    }

    fn jacobian(&self, x: &[f64], theta: &[f64], out: &mut DMatrix<f64>) {
        let j = gamma_score_jacobian(x[0], theta[0], theta[1]);
        for r in 0..2 {
            for c in 0..2 {
                out[(r, c)] = j[r][c];
            }
        }
    }

    fn start(&self, data: &[f64]) -> Result<Vec<f64>> {
        gamma_moment_start(data)
    }

    fn mean_moments(&self, data: &[f64], theta: &[f64], out: &mut [f64]) {
        let (b, a) = (theta[0], theta[1]);
        let n = data.len() as f64;
        let (mut sx, mut slog) = (0.0, 0.0);
        for &x in data {
            sx += x;
            slog += Float::ln(x / b);
        }
        out[0] = (sx / n / b - a) / b;
        out[1] = slog / n - digamma(a);
    }

    fn population_moments(&self, theta: &[f64]) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let info = gamma_fisher_information(theta[0], theta[1]);
        Some((info.clone(), -info))
    }
}

/// Characteristic-function matching: for probe points `u_1, …, u_K`,
///
/// ```text
/// g(x, θ) = (Re, Im)(e^{i⟨u_k, x⟩} - e^{ψ_θ(u_k)}),  k = 1..K
/// ```
///
/// stacked as `[Re_1, Im_1, Re_2, Im_2, …]`, so `q = 2K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharFnMatching<F> {
    family: F,
    u_points: Vec<Vec<f64>>,
}

impl<F: ParametricFamily> CharFnMatching<F> {
    /// Probe points must be nonzero, of the family's dimension and pairwise
    /// distinct, also up to sign (`u` and `-u` give linearly dependent moments).
    pub fn new(family: F, u_points: Vec<Vec<f64>>) -> Result<Self> {
        let m = family.dim();
        if u_points.is_empty() {
            return Err(Error::InvalidParameter {
                name: "u_points",
                reason: "at least one probe point is required".into(),
            });
        }
        for (k, u) in u_points.iter().enumerate() {
            if u.len() != m {
                return Err(Error::Dimension {
                    context: "probe point",
                    expected: m,
                    found: u.len(),
                });
            }
            if u.iter().any(|v| !v.is_finite()) || u.iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidParameter {
                    name: "u_points",
                    reason: format!("probe point {k} is zero or non-finite"),
                });
            }
            for w in &u_points[..k] {
                let same = u.iter().zip(w).all(|(a, b)| a == b);
                let opposite = u.iter().zip(w).all(|(a, b)| *a == -*b);
                if same || opposite {
                    return Err(Error::InvalidParameter {
                        name: "u_points",
                        reason: format!("probe point {k} duplicates an earlier one up to sign"),
                    });
                }
            }
        }
        Ok(Self { family, u_points })
    }

    pub fn u_points(&self) -> &[Vec<f64>] {
        &self.u_points
    }

    pub fn family(&self) -> &F {
        &self.family
    }

    fn phi(&self, u: &[f64], theta: &[f64]) -> Complex<f64> {
        self.family.char_exponent(u, theta).exp()
    }
}

impl CharFnMatching<GammaFamily> {
    /// Gamma family with the default probes `u ∈ {0.5, 1.0}`.
    pub fn gamma_default() -> Self {
        Self {
            family: GammaFamily,
            u_points: vec![vec![0.5], vec![1.0]],
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<F: ParametricFamily> MomentFunction for CharFnMatching<F> {
    fn moment_dim(&self) -> usize {
        2 * self.u_points.len()
    }

    fn param_dim(&self) -> usize {
        self.family.param_dim()
    }

    fn sample_dim(&self) -> usize {
        self.family.dim()
    }

    fn domain(&self) -> Vec<ParamDomain> {
        self.family.domain()
    }

    fn moments(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        for (k, u) in self.u_points.iter().enumerate() {
            let phi = self.phi(u, theta);
            let t = dot(u, x);
            out[2 * k] = Float::cos(t) - phi.re;
            out[2 * k + 1] = Float::sin(t) - phi.im;
        }
    }

    fn jacobian(&self, _x: &[f64], theta: &[f64], out: &mut DMatrix<f64>) {
        let r = self.family.param_dim();
        let mut grad = vec![Complex::new(0.0, 0.0); r];
        for (k, u) in self.u_points.iter().enumerate() {
            let phi = self.phi(u, theta);
            self.family.char_exponent_gradient(u, theta, &mut grad);
            for (j, g) in grad.iter().enumerate() {
                let d = -(g * phi);
                out[(2 * k, j)] = d.re;
                out[(2 * k + 1, j)] = d.im;
            }
        }
    }

    fn start(&self, data: &[f64]) -> Result<Vec<f64>> {
        self.family.start(data)
    }

    fn mean_moments(&self, data: &[f64], theta: &[f64], out: &mut [f64]) {
        let dim = self.sample_dim();
        let n = (data.len() / dim) as f64;
        for (k, u) in self.u_points.iter().enumerate() {
            let (mut c, mut s) = (0.0, 0.0);
            for x in data.chunks_exact(dim) {
                let t = dot(u, x);
                c += Float::cos(t);
                s += Float::sin(t);
            }
            let phi = self.phi(u, theta);
            out[2 * k] = c / n - phi.re;
            out[2 * k + 1] = s / n - phi.im;
        }
    }

    fn population_moments(&self, theta: &[f64]) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let q = self.moment_dim();
        let phi_at = |u: &[f64], v: &[f64], sign: f64| {
            let w: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + sign * b).collect();
            self.phi(&w, theta)
        };
        let mut omega = DMatrix::zeros(q, q);
        for (k, uk) in self.u_points.iter().enumerate() {
            let pk = self.phi(uk, theta);
            for (l, ul) in self.u_points.iter().enumerate() {
                let pl = self.phi(ul, theta);
                let plus = phi_at(uk, ul, 1.0);
                let minus = phi_at(uk, ul, -1.0);
                // E cos·cos, E sin·sin, E cos_k·sin_l
                let cc = 0.5 * (plus.re + minus.re);
                let ss = 0.5 * (minus.re - plus.re);
                let cs = 0.5 * (plus.im - minus.im);
                omega[(2 * k, 2 * l)] = cc - pk.re * pl.re;
                omega[(2 * k + 1, 2 * l + 1)] = ss - pk.im * pl.im;
                omega[(2 * k, 2 * l + 1)] = cs - pk.re * pl.im;
                omega[(2 * l + 1, 2 * k)] = cs - pk.re * pl.im;
            }
        }
        let mut g = DMatrix::zeros(q, self.param_dim());
        self.jacobian(&[], theta, &mut g);
        Some((omega, g))
    }
}

/// Settings for [`gmm_estimate`] and [`two_stage_estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct GmmOptions {
    pub optimizer: NelderMeadOptions,
    /// Overrides the moment function's own starting value.
    pub start: Option<Vec<f64>>,
    /// Results dropping more than this fraction of the sample are flagged.
    pub drop_flag_fraction: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            optimizer: NelderMeadOptions::default(),
            start: None,
            drop_flag_fraction: 0.01,
        }
    }
}

/// Outcome of a GMM fit.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmResult {
    pub theta: Vec<f64>,
    /// Weighting matrix of the (final) minimization.
    pub weighting: DMatrix<f64>,
    /// `Ω̂ = (1/N) Σ g gᵀ` at `θ̂`.
    pub omega: DMatrix<f64>,
    /// `Ĝ = (1/N) Σ ∇_θ g` at `θ̂`.
    pub jacobian: DMatrix<f64>,
    /// Asymptotic covariance of `√N (θ̂ - θ₀)`; divide by `N` for the covariance of `θ̂`.
    pub sigma: DMatrix<f64>,
    pub criterion: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    /// Observations used.
    pub n_used: usize,
    /// Observations outside the moment function's support.
    pub dropped: usize,
    /// More than the configured fraction was dropped.
    pub flagged: bool,
    /// Eigenvalues of `Ω̂(θ̃)` raised to the floor when forming the second-stage weighting.
    pub floored_eigenvalues: usize,
}

struct Prepared {
    data: Vec<f64>,
    dropped: usize,
    total: usize,
}

/// Admitted observations in a canonical (lexicographic) order, so that sums
/// do not depend on the order of the input sample.
fn prepare<M: MomentFunction + ?Sized>(sample: &IncrementSample, mf: &M) -> Result<Prepared> {
    let dim = mf.sample_dim();
    if sample.dim() != dim {
        return Err(Error::Dimension {
            context: "increment dimension for moment function",
            expected: dim,
            found: sample.dim(),
        });
    }
    let mut rows: Vec<&[f64]> = sample.iter().filter(|x| mf.admits(x)).collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let dropped = sample.len() - rows.len();
    if rows.is_empty() {
        return Err(Error::DegenerateSample(format!(
            "all {} observations lie outside the support of the moment conditions",
            sample.len()
        )));
    }
    Ok(Prepared {
        data: rows.concat(),
        dropped,
        total: sample.len(),
    })
}

fn quad_form(w: &DMatrix<f64>, m: &[f64]) -> f64 {
    let q = m.len();
    let mut acc = 0.0;
    for i in 0..q {
        for j in 0..q {
            acc += m[i] * w[(i, j)] * m[j];
        }
    }
    acc
}

fn check_weighting(w: &DMatrix<f64>, q: usize) -> Result<()> {
    crate::matpoly::check_shape(w, q, q, "weighting matrix")?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "weighting",
            reason: "non-finite entry".into(),
        });
    }
    Ok(())
}

/// `‖(1/N) Σ g(x_n, θ)‖²_W` over the admitted observations.
pub fn criterion<M: MomentFunction + ?Sized>(
    sample: &IncrementSample,
    mf: &M,
    w: &DMatrix<f64>,
    theta: &[f64],
) -> Result<f64> {
    check_weighting(w, mf.moment_dim())?;
    let prep = prepare(sample, mf)?;
    let mut m = vec![0.0; mf.moment_dim()];
    mf.mean_moments(&prep.data, theta, &mut m);
    Ok(quad_form(w, &m))
}

/// `(Ω̂, Ĝ)` at `θ`, averaged over row-major `data`.
fn sample_moment_matrices<M: MomentFunction + ?Sized>(
    mf: &M,
    data: &[f64],
    theta: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (q, r, dim) = (mf.moment_dim(), mf.param_dim(), mf.sample_dim());
    let n = (data.len() / dim) as f64;
    let mut omega = DMatrix::zeros(q, q);
    let mut jac = DMatrix::zeros(q, r);
    let mut g = vec![0.0; q];
    let mut j = DMatrix::zeros(q, r);
    for x in data.chunks_exact(dim) {
        mf.moments(x, theta, &mut g);
        for a in 0..q {
            for b in 0..q {
                omega[(a, b)] += g[a] * g[b];
            }
        }
        mf.jacobian(x, theta, &mut j);
        jac += &j;
    }
    (omega / n, jac / n)
}

/// Minimizes the GMM criterion with weighting `w`.
pub fn gmm_estimate<M: MomentFunction + ?Sized>(
    sample: &IncrementSample,
    mf: &M,
    w: &DMatrix<f64>,
    opts: &GmmOptions,
) -> Result<GmmResult> {
    let (q, r) = (mf.moment_dim(), mf.param_dim());
    if q < r {
        return Err(Error::InvalidParameter {
            name: "moment function",
            reason: format!("{q} moment conditions cannot identify {r} parameters"),
        });
    }
    check_weighting(w, q)?;
    let prep = prepare(sample, mf)?;
    estimate_prepared(&prep, mf, w, opts, 0)
}

fn estimate_prepared<M: MomentFunction + ?Sized>(
    prep: &Prepared,
    mf: &M,
    w: &DMatrix<f64>,
    opts: &GmmOptions,
    floored: usize,
) -> Result<GmmResult> {
    let (q, r) = (mf.moment_dim(), mf.param_dim());
    let domain = mf.domain();
    let start = match &opts.start {
        Some(s) => s.clone(),
        None => mf.start(&prep.data)?,
    };
    if start.len() != r {
        return Err(Error::Dimension {
            context: "starting value",
            expected: r,
            found: start.len(),
        });
    }
    let eta0 = start
        .iter()
        .zip(&domain)
        .map(|(t, d)| d.to_eta(*t))
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| Error::InvalidParameter {
            name: "start",
            reason: format!("{start:?} lies outside the parameter domain"),
        })?;

    let to_theta = |eta: &[f64]| -> Vec<f64> {
        eta.iter().zip(&domain).map(|(e, d)| d.to_theta(*e)).collect()
    };
    let mut m = vec![0.0; q];
    let objective = |eta: &[f64]| {
        let theta = to_theta(eta);
        if theta.iter().any(|t| !t.is_finite()) {
            return f64::INFINITY;
        }
        mf.mean_moments(&prep.data, &theta, &mut m);
        quad_form(w, &m)
    };
    let min = nelder_mead(objective, &eta0, &opts.optimizer).map_err(|e| match e {
        Error::NonConvergence {
            best_theta,
            best_value,
            iterations,
            restarts,
        } => Error::NonConvergence {
            best_theta: to_theta(&best_theta),
            best_value,
            iterations,
            restarts,
        },
        e => e,
    })?;
    let theta = to_theta(&min.x);
    let (omega, jacobian) = sample_moment_matrices(mf, &prep.data, &theta);
    let sigma = asymptotic_covariance(&jacobian, &omega, w)?;
    let n_used = prep.total - prep.dropped;
    Ok(GmmResult {
        theta,
        weighting: w.clone(),
        omega,
        jacobian,
        sigma,
        criterion: min.value.max(0.0),
        iterations: min.iterations,
        restarts: min.restarts,
        converged: min.converged,
        n_used,
        dropped: prep.dropped,
        flagged: prep.dropped as f64 > opts.drop_flag_fraction * prep.total as f64,
        floored_eigenvalues: floored,
    })
}

/// Inverse of a moment covariance, with eigenvalues below `1e-10 · trace/q`
/// raised to that floor. Returns the inverse and the number of floored
/// eigenvalues; more than `q - r` of them is an error.
pub fn optimal_weighting(omega: &DMatrix<f64>, r: usize) -> Result<(DMatrix<f64>, usize)> {
    let q = omega.nrows();
    crate::matpoly::check_shape(omega, q, q, "moment covariance")?;
    let sym = (omega + omega.transpose()) * 0.5;
    let floor = 1e-10 * sym.trace() / q as f64;
    let eig = sym.symmetric_eigen();
    let below = eig.eigenvalues.iter().filter(|&&l| !(l >= floor)).count();
    if below > q.saturating_sub(r) || !(floor > 0.0) {
        return Err(Error::SingularMomentCovariance {
            below_floor: below,
            allowed: q.saturating_sub(r),
        });
    }
    let inv = eig.eigenvalues.map(|l| 1.0 / l.max(floor));
    let w = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
    Ok(((&w + w.transpose()) * 0.5, below))
}

/// First stage with `W = I`, second with `W = Ω̂(θ̃)⁻¹` started at `θ̃`.
pub fn two_stage_estimate<M: MomentFunction + ?Sized>(
    sample: &IncrementSample,
    mf: &M,
    opts: &GmmOptions,
) -> Result<GmmResult> {
    let q = mf.moment_dim();
    let first = gmm_estimate(sample, mf, &DMatrix::identity(q, q), opts)?;
    let (w, floored) = optimal_weighting(&first.omega, mf.param_dim())?;
    let prep = prepare(sample, mf)?;
    let second = GmmOptions {
        start: Some(first.theta.clone()),
        ..opts.clone()
    };
    let mut res = estimate_prepared(&prep, mf, &w, &second, floored)?;
    res.iterations += first.iterations;
    Ok(res)
}

/// `[GᵀWG]⁻¹ GᵀWΩWG [GᵀWG]⁻¹`, symmetrized.
pub fn asymptotic_covariance(
    g: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (q, r) = g.shape();
    crate::matpoly::check_shape(omega, q, q, "moment covariance")?;
    crate::matpoly::check_shape(w, q, q, "weighting matrix")?;
    let gtw = g.transpose() * w;
    let a = &gtw * g;
    let rank = numerical_rank(&a);
    if rank < r {
        return Err(Error::RankDeficient { rank, required: r });
    }
    let a_inv = a.try_inverse().ok_or(Error::RankDeficient { rank, required: r })?;
    let bread = &a_inv * &gtw;
    let s = &bread * omega * bread.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// A GMM fit from recovered increments, with the sampling setup it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationEstimate {
    pub gmm: GmmResult,
    pub increments: IncrementSample,
    pub n_units: usize,
    pub h: f64,
}

/// Recovers the unit increments from `series` and fits them by two-stage GMM.
pub fn estimate_from_observations<M: MomentFunction + ?Sized>(
    ssr: &StateSpaceRealization,
    series: &SampledSeries,
    mf: &M,
    opts: &GmmOptions,
) -> Result<ObservationEstimate> {
    let rec = recover_increments(ssr, series, &RecoveryConfig::default())?;
    let gmm = two_stage_estimate(&rec.increments, mf, opts)?;
    Ok(ObservationEstimate {
        gmm,
        increments: rec.increments,
        n_units: series.n_units(),
        h: series.h(),
    })
}

/// Boxed moment function, for choosing the estimator at run time.
pub type DynMomentFunction = Box<dyn MomentFunction + Send + Sync>;
