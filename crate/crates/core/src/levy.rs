//! Parametric Lévy processes.
//!
//! A [`LevySpec`] names a family and its parameters; it can draw increments
//! `L(t + dt) - L(t)` and report its characteristic triplet `(γ, Σᴳ, ν)` with
//! respect to the truncation function `1{‖x‖ < 1}`. The Gamma-distribution
//! helpers below cover the unit-increment law of the Gamma subordinator with
//! scale `b` and shape `a` (mean `ab`, variance `ab²`).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, DVector};
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::special::{digamma, gamma_p, ln_gamma, normal_cdf, normal_pdf};

pub use crate::special::trigamma;

/// Law of the individual jumps of a compound Poisson process.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpLaw {
    /// Scalar normal jumps.
    Normal { mean: f64, std_dev: f64 },
    /// Every jump has the same size.
    Fixed(Vec<f64>),
}

impl JumpLaw {
    fn dim(&self) -> usize {
        match self {
            JumpLaw::Normal { .. } => 1,
            JumpLaw::Fixed(v) => v.len(),
        }
    }
}

/// Symbolic Lévy measure, detailed enough to integrate moments in closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum LevyMeasure {
    Zero { dim: usize },
    /// `ν(dx) = a x⁻¹ e^{-x/b} dx` on `x > 0`.
    Gamma { scale: f64, shape: f64 },
    /// `ν = rate · (jump law)`.
    CompoundPoisson { rate: f64, jumps: JumpLaw },
}

impl LevyMeasure {
    pub fn dim(&self) -> usize {
        match self {
            LevyMeasure::Zero { dim } => *dim,
            LevyMeasure::Gamma { .. } => 1,
            LevyMeasure::CompoundPoisson { jumps, .. } => jumps.dim(),
        }
    }

    /// `ν(ℝᵐ)`, infinite for the Gamma measure.
    pub fn total_mass(&self) -> f64 {
        match self {
            LevyMeasure::Zero { .. } => 0.0,
            LevyMeasure::Gamma { .. } => f64::INFINITY,
            LevyMeasure::CompoundPoisson { rate, .. } => *rate,
        }
    }

    /// `∫_{‖x‖<1} x ν(dx)`.
    pub fn small_jump_mean(&self) -> DVector<f64> {
        match self {
            LevyMeasure::Zero { dim } => DVector::zeros(*dim),
            LevyMeasure::Gamma { scale, shape } => {
                DVector::from_element(1, shape * scale * (1.0 - Float::exp(-1.0 / scale)))
            }
            LevyMeasure::CompoundPoisson { rate, jumps } => match jumps {
                JumpLaw::Normal { mean, std_dev } => {
                    let lo = (-1.0 - mean) / std_dev;
                    let hi = (1.0 - mean) / std_dev;
                    let m = mean * (normal_cdf(hi) - normal_cdf(lo))
                        - std_dev * (normal_pdf(hi) - normal_pdf(lo));
                    DVector::from_element(1, rate * m)
                }
                JumpLaw::Fixed(v) => {
                    let x = DVector::from_column_slice(v);
                    if x.norm() < 1.0 {
                        x * *rate
                    } else {
                        DVector::zeros(v.len())
                    }
                }
            },
        }
    }

    /// `∫_{‖x‖≥1} x ν(dx)`.
    pub fn big_jump_mean(&self) -> DVector<f64> {
        match self {
            LevyMeasure::Zero { dim } => DVector::zeros(*dim),
            LevyMeasure::Gamma { scale, shape } => {
                DVector::from_element(1, shape * scale * Float::exp(-1.0 / scale))
            }
            LevyMeasure::CompoundPoisson { rate, jumps } => {
                let total = match jumps {
                    JumpLaw::Normal { mean, .. } => DVector::from_element(1, *mean),
                    JumpLaw::Fixed(v) => DVector::from_column_slice(v),
                } * *rate;
                total - self.small_jump_mean()
            }
        }
    }

    /// `∫ x xᵀ ν(dx)`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        match self {
            LevyMeasure::Zero { dim } => DMatrix::zeros(*dim, *dim),
            LevyMeasure::Gamma { scale, shape } => {
                DMatrix::from_element(1, 1, shape * scale * scale)
            }
            LevyMeasure::CompoundPoisson { rate, jumps } => match jumps {
                JumpLaw::Normal { mean, std_dev } => {
                    DMatrix::from_element(1, 1, rate * (mean * mean + std_dev * std_dev))
                }
                JumpLaw::Fixed(v) => {
                    let x = DVector::from_column_slice(v);
                    &x * x.transpose() * *rate
                }
            },
        }
    }
}

/// Characteristic triplet `(γ, Σᴳ, ν)` of the unit-time law.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicTriplet {
    pub drift: DVector<f64>,
    pub gaussian_cov: DMatrix<f64>,
    pub levy_measure: LevyMeasure,
}

impl CharacteristicTriplet {
    /// `E L(1) = γ + ∫_{‖x‖≥1} x ν(dx)`.
    pub fn mean(&self) -> DVector<f64> {
        &self.drift + self.levy_measure.big_jump_mean()
    }

    /// `Cov L(1) = Σᴳ + ∫ x xᵀ ν(dx)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.gaussian_cov + self.levy_measure.second_moment()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Family {
    Gamma { scale: f64, shape: f64 },
    BrownianDrift {
        drift: DVector<f64>,
        cov: DMatrix<f64>,
        cov_sqrt: DMatrix<f64>,
    },
    CompoundPoisson { rate: f64, jumps: JumpLaw },
    DriftOnly { drift: DVector<f64> },
}

/// A parametric Lévy process.
#[derive(Debug, Clone, PartialEq)]
pub struct LevySpec {
    family: Family,
}

impl LevySpec {
    /// Gamma subordinator: unit increments are Gamma with scale `b`, shape `a`.
    pub fn gamma(scale: f64, shape: f64) -> Result<Self> {
        positive("scale", scale)?;
        positive("shape", shape)?;
        Ok(Self {
            family: Family::Gamma { scale, shape },
        })
    }

    /// Brownian motion with drift `γ` and covariance `Σᴳ` (symmetric PSD).
    pub fn brownian_drift(drift: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let m = drift.len();
        if m == 0 {
            return Err(Error::InvalidParameter {
                name: "drift",
                reason: "dimension must be positive".into(),
            });
        }
        crate::matpoly::check_shape(&cov, m, m, "gaussian covariance")?;
        if (&cov - cov.transpose()).amax() > 1e-12 * (1.0 + cov.amax()) {
            return Err(Error::InvalidParameter {
                name: "cov",
                reason: "not symmetric".into(),
            });
        }
        let eig = cov.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min < -1e-12 * (1.0 + cov.amax()) {
            return Err(Error::InvalidParameter {
                name: "cov",
                reason: format!("not positive semidefinite (eigenvalue {min:e})"),
            });
        }
        let root = eig.eigenvalues.map(|l| Float::sqrt(l.max(0.0)));
        let cov_sqrt = &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose();
        Ok(Self {
            family: Family::BrownianDrift {
                drift,
                cov,
                cov_sqrt,
            },
        })
    }

    pub fn compound_poisson(rate: f64, jumps: JumpLaw) -> Result<Self> {
        positive("rate", rate)?;
        match &jumps {
            JumpLaw::Normal { mean, std_dev } => {
                if !mean.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "mean",
                        reason: "must be finite".into(),
                    });
                }
                positive("std_dev", *std_dev)?;
            }
            JumpLaw::Fixed(v) => {
                if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParameter {
                        name: "jump",
                        reason: "must be a finite, non-empty vector".into(),
                    });
                }
            }
        }
        Ok(Self {
            family: Family::CompoundPoisson { rate, jumps },
        })
    }

    pub fn drift_only(drift: DVector<f64>) -> Result<Self> {
        if drift.is_empty() || drift.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "drift",
                reason: "must be a finite, non-empty vector".into(),
            });
        }
        Ok(Self {
            family: Family::DriftOnly { drift },
        })
    }

    pub fn dim(&self) -> usize {
        match &self.family {
            Family::Gamma { .. } => 1,
            Family::BrownianDrift { drift, .. } | Family::DriftOnly { drift } => drift.len(),
            Family::CompoundPoisson { jumps, .. } => jumps.dim(),
        }
    }

    /// `(scale, shape)` when this is a Gamma subordinator.
    pub fn gamma_params(&self) -> Option<(f64, f64)> {
        match self.family {
            Family::Gamma { scale, shape } => Some((scale, shape)),
            _ => None,
        }
    }

    /// Draws `L(t + dt) - L(t)` into `out` (length [`dim`](Self::dim)).
    pub fn sample_into<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R, out: &mut [f64]) {
        debug_assert!(dt > 0.0);
        debug_assert_eq!(out.len(), self.dim());
        match &self.family {
            Family::Gamma { scale, shape } => out[0] = sample_gamma(rng, shape * dt) * scale,
            Family::DriftOnly { drift } => {
                for (o, g) in out.iter_mut().zip(drift.iter()) {
                    *o = g * dt;
                }
            }
            Family::BrownianDrift {
                drift, cov_sqrt, ..
            } => {
                let sd = Float::sqrt(dt);
                let z: DVector<f64> =
                    DVector::from_fn(drift.len(), |_, _| StandardNormal.sample(rng));
                let w = cov_sqrt * z;
                for i in 0..drift.len() {
                    out[i] = drift[i] * dt + sd * w[i];
                }
            }
            Family::CompoundPoisson { rate, jumps } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let count = poisson_count(rng, rate * dt);
                for _ in 0..count {
                    match jumps {
                        JumpLaw::Normal { mean, std_dev } => {
                            let z: f64 = StandardNormal.sample(rng);
                            out[0] += mean + std_dev * z;
                        }
                        JumpLaw::Fixed(v) => {
                            for (o, x) in out.iter_mut().zip(v) {
                                *o += x;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Draws `L(t + dt) - L(t)`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> DVector<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(dt, rng, &mut out);
        DVector::from_vec(out)
    }

    /// Characteristic triplet of `L(1)`.
    pub fn triplet(&self) -> CharacteristicTriplet {
        let m = self.dim();
        match &self.family {
            Family::Gamma { scale, shape } => {
                let measure = LevyMeasure::Gamma {
                    scale: *scale,
                    shape: *shape,
                };
                CharacteristicTriplet {
                    drift: measure.small_jump_mean(),
                    gaussian_cov: DMatrix::zeros(1, 1),
                    levy_measure: measure,
                }
            }
            Family::BrownianDrift { drift, cov, .. } => CharacteristicTriplet {
                drift: drift.clone(),
                gaussian_cov: cov.clone(),
                levy_measure: LevyMeasure::Zero { dim: m },
            },
            Family::DriftOnly { drift } => CharacteristicTriplet {
                drift: drift.clone(),
                gaussian_cov: DMatrix::zeros(m, m),
                levy_measure: LevyMeasure::Zero { dim: m },
            },
            Family::CompoundPoisson { rate, jumps } => {
                let measure = LevyMeasure::CompoundPoisson {
                    rate: *rate,
                    jumps: jumps.clone(),
                };
                CharacteristicTriplet {
                    drift: measure.small_jump_mean(),
                    gaussian_cov: DMatrix::zeros(m, m),
                    levy_measure: measure,
                }
            }
        }
    }
}

/// Characteristic triplet of the unit-time law of `spec`.
pub fn triplet_of(spec: &LevySpec) -> CharacteristicTriplet {
    spec.triplet()
}

/// Draws from the law of `L(dt)`.
pub fn sample_increment<R: Rng + ?Sized>(spec: &LevySpec, dt: f64, rng: &mut R) -> DVector<f64> {
    spec.sample_increment(dt, rng)
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be positive and finite, got {v}"),
        })
    }
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // (0, 1]
    1.0 - rng.random::<f64>()
}

/// Standard Gamma(shape, 1) variate.
///
/// Marsaglia–Tsang squeeze for `shape >= 1`; for `shape < 1` the draw is
/// boosted as `G(shape + 1) · U^{1/shape}`, evaluated in log space since the
/// exponent is huge for the tiny shapes of fine Euler steps.
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape < 1.0 {
        let g = marsaglia_tsang(rng, shape + 1.0);
        let u = open_unit(rng);
        return Float::exp(Float::ln(g) + Float::ln(u) / shape);
    }
    marsaglia_tsang(rng, shape)
}

fn marsaglia_tsang<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / Float::sqrt(9.0 * d);
    loop {
        let x: f64 = StandardNormal.sample(rng);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = open_unit(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if Float::ln(u) < 0.5 * x2 + d * (1.0 - v + Float::ln(v)) {
            return d * v;
        }
    }
}

fn poisson_count<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(p) => p.sample(rng) as u64,
        Err(_) => 0,
    }
}

/// `log f_{b,a}(x)` of the Gamma density with scale `b`, shape `a`; `-∞` for `x <= 0`.
pub fn gamma_logpdf(x: f64, scale: f64, shape: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = x / scale;
    -ln_gamma(shape) - Float::ln(scale) + (shape - 1.0) * Float::ln(z) - z
}

/// `F_{b,a}(x) = P(a, x/b)`.
pub fn gamma_cdf(x: f64, scale: f64, shape: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_p(shape, x / scale)
}

/// `∇_{(b,a)} log f_{b,a}(x) = ((x/b - a)/b, ln(x/b) - ψ(a))`.
pub fn gamma_score(x: f64, scale: f64, shape: f64) -> [f64; 2] {
    [
        (x / scale - shape) / scale,
        Float::ln(x / scale) - digamma(shape),
    ]
}

/// Hessian of `log f_{b,a}(x)` in `(b, a)`.
pub fn gamma_score_jacobian(x: f64, scale: f64, shape: f64) -> [[f64; 2]; 2] {
    let b2 = scale * scale;
    let off = -1.0 / scale;
    [
        [shape / b2 - 2.0 * x / (b2 * scale), off],
        [off, -trigamma(shape)],
    ]
}

/// Fisher information of the Gamma family in `(b, a)`.
pub fn gamma_fisher_information(scale: f64, shape: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            shape / (scale * scale),
            1.0 / scale,
            1.0 / scale,
            trigamma(shape),
        ],
    )
}

/// Characteristic exponent `ψ(u) = -a log(1 - i b u)` of the Gamma subordinator
/// (principal branch; `1 - ibu` never crosses the negative real axis).
pub fn gamma_char_exponent(u: f64, scale: f64, shape: f64) -> Complex<f64> {
    -(Complex::new(1.0, -scale * u).ln()) * shape
}

/// Increment sample `ΔL_1, …, ΔL_N` of an `m`-dimensional process.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSample {
    dim: usize,
    spacing: f64,
    values: Vec<f64>,
}

impl IncrementSample {
    /// `values` is row-major: increment `n` occupies `values[n*dim..(n+1)*dim]`.
    pub fn new(dim: usize, spacing: f64, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::Dimension {
                context: "increment sample",
                expected: dim,
                found: values.len(),
            });
        }
        if values.is_empty() {
            return Err(Error::DegenerateSample("no increments".into()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateSample("non-finite increment".into()));
        }
        positive("spacing", spacing)?;
        Ok(Self {
            dim,
            spacing,
            values,
        })
    }

    /// Unit-spaced scalar sample.
    pub fn scalar(values: Vec<f64>) -> Result<Self> {
        Self::new(1, 1.0, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, n: usize) -> &[f64] {
        &self.values[n * self.dim..(n + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn drift_only_is_deterministic() {
        let spec = LevySpec::drift_only(DVector::from_vec(vec![1.5, -2.0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = spec.sample_increment(0.25, &mut rng);
        assert_eq!(x.as_slice(), &[0.375, -0.5]);
    }

    #[test]
    fn gamma_logpdf_values() {
        assert!((gamma_logpdf(2.0, 2.0, 1.0) - (Float::ln(0.5) - 1.0)).abs() < 1e-14);
        assert!((gamma_logpdf(1.0, 1.0, 2.0) + 1.0).abs() < 1e-14);
        assert_eq!(gamma_logpdf(0.0, 1.0, 1.0), f64::NEG_INFINITY);
        // mode at b(a-1)
        let (b, a) = (1.5, 3.0);
        let mode = b * (a - 1.0);
        assert!(gamma_logpdf(mode, b, a) > gamma_logpdf(mode + 1e-3, b, a));
        assert!(gamma_logpdf(mode, b, a) > gamma_logpdf(mode - 1e-3, b, a));
    }

    #[test]
    fn gamma_cdf_values() {
        assert_eq!(gamma_cdf(0.0, 2.0, 1.0), 0.0);
        assert!((gamma_cdf(2.0, 2.0, 1.0) - 0.632_120_558_828_557_7).abs() < 1e-14);
        assert!((gamma_cdf(4.0, 2.0, 2.0) - (1.0 - 3.0 * Float::exp(-2.0))).abs() < 1e-14);
    }

    #[test]
    fn gamma_score_values() {
        let s = gamma_score(2.0, 2.0, 1.0);
        assert_eq!(s[0], 0.0);
        assert!((s[1] - 0.577_215_664_901_532_9).abs() < 1e-14);
        let s = gamma_score(3.0 * 0.7, 0.7, 3.0);
        assert!(s[0].abs() < 1e-15);
    }

    #[test]
    fn gamma_char_exponent_values() {
        assert_eq!(gamma_char_exponent(0.0, 2.0, 1.0), Complex::new(0.0, 0.0));
        let psi = gamma_char_exponent(1.0, 1.0, 1.0);
        let expected = -Complex::new(0.5 * core::f64::consts::LN_2, -core::f64::consts::FRAC_PI_4);
        assert!((psi - expected).norm() < 1e-15);
        for &u in &[-50.0, -1.0, 0.3, 7.0, 1e3] {
            assert!(gamma_char_exponent(u, 2.0, 1.0).exp().norm() <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn triplets() {
        let g = DVector::from_vec(vec![0.5]);
        let s = DMatrix::from_element(1, 1, 2.0);
        let t = LevySpec::brownian_drift(g.clone(), s.clone()).unwrap().triplet();
        assert_eq!(t.drift, g);
        assert_eq!(t.gaussian_cov, s);
        assert_eq!(t.levy_measure, LevyMeasure::Zero { dim: 1 });

        let t = LevySpec::drift_only(g.clone()).unwrap().triplet();
        assert_eq!(t.gaussian_cov, DMatrix::zeros(1, 1));

        let t = LevySpec::gamma(2.0, 1.0).unwrap().triplet();
        assert!((t.mean()[0] - 2.0).abs() < 1e-14);
        assert!((t.covariance()[(0, 0)] - 4.0).abs() < 1e-14);
        assert!((t.levy_measure.big_jump_mean()[0] - 2.0 * Float::exp(-0.5)).abs() < 1e-14);
    }

    #[test]
    fn compound_poisson_moments() {
        let spec = LevySpec::compound_poisson(
            3.0,
            JumpLaw::Normal {
                mean: 0.4,
                std_dev: 0.8,
            },
        )
        .unwrap();
        let t = spec.triplet();
        assert!((t.mean()[0] - 1.2).abs() < 1e-12);
        assert!((t.covariance()[(0, 0)] - 3.0 * (0.16 + 0.64)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(LevySpec::gamma(0.0, 1.0).is_err());
        assert!(LevySpec::gamma(1.0, -1.0).is_err());
        assert!(LevySpec::compound_poisson(0.0, JumpLaw::Fixed(vec![1.0])).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(LevySpec::brownian_drift(DVector::zeros(2), bad).is_err());
    }

    #[test]
    fn small_shape_gamma_is_positive_and_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let x = sample_gamma(&mut rng, 5e-4);
            assert!(x >= 0.0 && x.is_finite());
        }
    }
}
