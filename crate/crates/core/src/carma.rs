//! Controller-canonical CARMA models.
//!
//! A model is the pair `P(z) = z^p I + A_1 z^{p-1} + … + A_p` (`m×m`) and
//! `Q(z) = B_0 + B_1 z + … + B_q z^q` (`d×m`). Its state-space form is
//!
//! ```text
//! dX(t) = A X(t) dt + E_p dL(t),    Y(t) = B̲ X(t)
//! ```
//!
//! with `A` the block companion of `P`, `E_p = [0 … 0 I]ᵀ` and
//! `B̲ = [B_0 … B_q 0 … 0]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, DVector};
use num_traits::Float;
use rand::Rng;

use crate::error::{Assumption, Error, Result};
use crate::levy::{IncrementSample, LevySpec};
use crate::matpoly::{
    self, companion, is_hurwitz, left_inverse, matrix_power, numerical_rank, resolvent_block,
    MatrixPolynomialGeneral, MatrixPolynomialMonic,
};

/// Relative tolerance for checking that a time span is a whole number of steps.
const GRID_TOL: f64 = 1e-9;

/// A CARMA(p, q) model driven by an `m`-dimensional Lévy process with `d`-dimensional output.
#[derive(Debug, Clone, PartialEq)]
pub struct CarmaModel {
    ar: MatrixPolynomialMonic,
    ma: MatrixPolynomialGeneral,
}

impl CarmaModel {
    /// `ar` holds `A_1, …, A_p` (`m×m`), `ma` holds `B_0, …, B_q` (`d×m`).
    ///
    /// Fails unless `p > q > 0`, `P` is stable (all zeros of `det P` in the
    /// open left half-plane) and `Q` is invertible in the sense that `B_q` and
    /// `B_qᵀB_0` have full rank `m` and the zeros of `det(B_q^{~1}Q(z))` lie in
    /// the open left half-plane.
    pub fn new(ar: Vec<DMatrix<f64>>, ma: Vec<DMatrix<f64>>) -> Result<Self> {
        let m = ar.first().map(|a| a.nrows()).ok_or(Error::InvalidParameter {
            name: "p",
            reason: "at least one autoregressive coefficient is required".into(),
        })?;
        let d = ma.first().map(|b| b.nrows()).unwrap_or(0);
        let ar = MatrixPolynomialMonic::new(m, ar)?;
        let ma = MatrixPolynomialGeneral::new(d, m, ma)?;
        let (p, q) = (ar.degree(), ma.degree());
        if q == 0 || p <= q {
            return Err(Error::InvalidParameter {
                name: "order",
                reason: format!("need p > q > 0, got p = {p}, q = {q}"),
            });
        }
        if m > d {
            return Err(Error::AssumptionViolated {
                assumption: Assumption::Invertibility,
                detail: format!("driver dimension {m} exceeds output dimension {d}"),
            });
        }
        let model = Self { ar, ma };
        if !is_hurwitz(companion(&model.ar).as_matrix(), 0.0)? {
            return Err(Error::AssumptionViolated {
                assumption: Assumption::Stationarity,
                detail: "det P(z) has a zero with nonnegative real part".into(),
            });
        }
        let bq = model.ma.coeff(q);
        let rank = numerical_rank(bq);
        if rank < m {
            return Err(Error::AssumptionViolated {
                assumption: Assumption::Invertibility,
                detail: format!("B_q has rank {rank} < {m}"),
            });
        }
        let rank = numerical_rank(&(bq.transpose() * model.ma.coeff(0)));
        if rank < m {
            return Err(Error::AssumptionViolated {
                assumption: Assumption::Invertibility,
                detail: format!("B_qᵀB_0 has rank {rank} < {m}"),
            });
        }
        let bbold = recovery_companion(&model)?;
        if !is_hurwitz(&bbold, 0.0)? {
            return Err(Error::AssumptionViolated {
                assumption: Assumption::Invertibility,
                detail: "det(B_q^{~1}Q(z)) has a zero with nonnegative real part".into(),
            });
        }
        Ok(model)
    }

    /// Scalar model `P(z) = z^p + a_1 z^{p-1} + … + a_p`, `Q(z) = b_0 + … + b_q z^q`.
    pub fn scalar(ar: &[f64], ma: &[f64]) -> Result<Self> {
        let one = |x: &f64| DMatrix::from_element(1, 1, *x);
        Self::new(ar.iter().map(one).collect(), ma.iter().map(one).collect())
    }

    pub fn p(&self) -> usize {
        self.ar.degree()
    }

    pub fn q(&self) -> usize {
        self.ma.degree()
    }

    /// Driver dimension.
    pub fn m(&self) -> usize {
        self.ar.block_dim()
    }

    /// Output dimension.
    pub fn d(&self) -> usize {
        self.ma.rows()
    }

    /// `A_k`, 1-based.
    pub fn ar_coeff(&self, k: usize) -> &DMatrix<f64> {
        self.ar.coeff(k)
    }

    /// `B_j`, 0-based.
    pub fn ma_coeff(&self, j: usize) -> &DMatrix<f64> {
        self.ma.coeff(j)
    }

    pub fn ar_poly(&self) -> &MatrixPolynomialMonic {
        &self.ar
    }

    pub fn ma_poly(&self) -> &MatrixPolynomialGeneral {
        &self.ma
    }
}

/// Companion of `z^q I + B_q^{~1}B_{q-1} z^{q-1} + … + B_q^{~1}B_0`.
fn recovery_companion(model: &CarmaModel) -> Result<DMatrix<f64>> {
    let q = model.q();
    let bq_inv = left_inverse(model.ma_coeff(q))?;
    let coeffs = (1..=q).map(|k| &bq_inv * model.ma_coeff(q - k)).collect();
    Ok(companion(&MatrixPolynomialMonic::new(model.m(), coeffs)?).into_matrix())
}

/// State-space matrices of a model together with the operators used to
/// reconstruct the driving increments from the output.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceRealization {
    p: usize,
    q: usize,
    m: usize,
    d: usize,
    a: DMatrix<f64>,
    ep: DMatrix<f64>,
    bline: DMatrix<f64>,
    bbold: DMatrix<f64>,
    eq: DMatrix<f64>,
    selector: DMatrix<f64>,
    bbold_powers: Vec<DMatrix<f64>>,
    expm_bbold: DMatrix<f64>,
    k_deriv: Vec<DMatrix<f64>>,
    k_state: DMatrix<f64>,
    k_int: DMatrix<f64>,
}

impl StateSpaceRealization {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of samples beyond the last unit time needed by the forward differences.
    pub fn lookahead(&self) -> usize {
        self.p - self.q - 1
    }

    /// `pm×pm` block companion of `P`.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// `pm×m`, identity in the last block.
    pub fn ep(&self) -> &DMatrix<f64> {
        &self.ep
    }

    /// `d×pm`, `[B_0 … B_q 0 … 0]`.
    pub fn bline(&self) -> &DMatrix<f64> {
        &self.bline
    }

    /// `qm×qm` companion driving the first `q` state blocks.
    pub fn bbold(&self) -> &DMatrix<f64> {
        &self.bbold
    }

    /// `qm×d`, `[0 … 0 B_q^{~1}]ᵀ` stacked.
    pub fn eq(&self) -> &DMatrix<f64> {
        &self.eq
    }

    /// `m×qm`, picks the last `m`-block of the truncated state.
    pub fn selector(&self) -> &DMatrix<f64> {
        &self.selector
    }

    /// `e^𝐁`.
    pub fn expm_bbold(&self) -> &DMatrix<f64> {
        &self.expm_bbold
    }

    /// `𝐁^k` for `k = 0..=p-q`.
    pub fn bbold_power(&self, k: usize) -> &DMatrix<f64> {
        &self.bbold_powers[k]
    }

    /// Coefficient of the `ν`-th difference term, `ν = 0..p-q`.
    pub fn k_deriv(&self) -> &[DMatrix<f64>] {
        &self.k_deriv
    }

    /// Coefficient of `X_q(n) - X_q(n-1)`.
    pub fn k_state(&self) -> &DMatrix<f64> {
        &self.k_state
    }

    /// Coefficient of `∫_{n-1}^n Y(s) ds`.
    pub fn k_int(&self) -> &DMatrix<f64> {
        &self.k_int
    }
}

/// Assembles the controller-canonical realization and the recovery operators.
pub fn build_state_space(model: &CarmaModel) -> Result<StateSpaceRealization> {
    let (p, q, m, d) = (model.p(), model.q(), model.m(), model.d());
    let a = companion(model.ar_poly()).into_matrix();

    let mut ep = DMatrix::zeros(p * m, m);
    ep.view_mut(((p - 1) * m, 0), (m, m))
        .copy_from(&DMatrix::identity(m, m));

    let mut bline = DMatrix::zeros(d, p * m);
    for j in 0..=q {
        bline.view_mut((0, j * m), (d, m)).copy_from(model.ma_coeff(j));
    }

    let bq_inv = left_inverse(model.ma_coeff(q))?;
    let bbold = recovery_companion(model)?;
    let mut eq = DMatrix::zeros(q * m, d);
    eq.view_mut(((q - 1) * m, 0), (m, d)).copy_from(&bq_inv);
    let mut selector = DMatrix::zeros(m, q * m);
    selector
        .view_mut((0, (q - 1) * m), (m, m))
        .copy_from(&DMatrix::identity(m, m));

    let s = p - q;
    let bbold_powers: Vec<DMatrix<f64>> = (0..=s).map(|k| matrix_power(&bbold, k)).collect();
    let ar = |k: usize| model.ar_coeff(k);

    let k_deriv = (0..s)
        .map(|nu| {
            let mut k = &selector * &bbold_powers[s - 1 - nu] * &eq;
            for kk in nu..s.saturating_sub(1) {
                k += ar(s - kk - 1) * &selector * &bbold_powers[kk - nu] * &eq;
            }
            k
        })
        .collect();

    // A̲_q = [A_p … A_{p-q+1}]
    let mut ar_q = DMatrix::zeros(m, q * m);
    for j in 0..q {
        ar_q.view_mut((0, j * m), (m, m)).copy_from(ar(p - j));
    }
    // A̲_q 𝐁^{-1} = (𝐁^{-T} A̲_qᵀ)ᵀ
    let mut k_state = matpoly::solve(&bbold.transpose(), &ar_q.transpose())?.transpose();
    for k in 1..=s {
        k_state += ar(s - k + 1) * &selector * &bbold_powers[k - 1];
    }
    k_state += &selector * &bbold_powers[s];

    let inner = &bq_inv * model.ma_coeff(0);
    let k_int = matpoly::solve(&inner.transpose(), &ar(p).transpose())?.transpose() * &bq_inv;

    let expm_bbold = matpoly::expm(&bbold);
    let ssr = StateSpaceRealization {
        p,
        q,
        m,
        d,
        a,
        ep,
        bline,
        bbold,
        eq,
        selector,
        bbold_powers,
        expm_bbold,
        k_deriv,
        k_state,
        k_int,
    };
    #[cfg(debug_assertions)]
    {
        let probes = [
            Complex::new(1.0, 0.0),
            Complex::new(0.5, 2.0),
            Complex::new(3.0, -1.5),
        ];
        let dev = transfer_identity_check(&ssr, model, &probes)?;
        debug_assert!(dev <= 1e-8 * (1.0 + ssr.bline.amax()), "transfer deviation {dev}");
    }
    Ok(ssr)
}

/// Largest deviation `‖B̲ (zI - A)^{-1} E_p − Q(z) P(z)^{-1}‖` over the probes
/// (entrywise maximum modulus).
///
/// The left side is assembled from the closed-form resolvent blocks of the
/// last block column; the right side from a direct solve with `P(z)`.
pub fn transfer_identity_check(
    ssr: &StateSpaceRealization,
    model: &CarmaModel,
    z_probes: &[Complex<f64>],
) -> Result<f64> {
    let (p, m, d) = (ssr.p, ssr.m, ssr.d);
    let mut worst: f64 = 0.0;
    for &z in z_probes {
        let mut lhs = DMatrix::<Complex<f64>>::zeros(d, m);
        for i in 1..=p {
            let bi = ssr.bline.view((0, (i - 1) * m), (d, m)).map(|x| Complex::new(x, 0.0));
            lhs += bi * resolvent_block(model.ar_poly(), z, i, p)?;
        }
        let p_inv = model
            .ar_poly()
            .eval(z)
            .try_inverse()
            .ok_or(Error::SingularAt { re: z.re, im: z.im })?;
        let rhs = model.ma_poly().eval(z) * p_inv;
        let dev = (lhs - rhs).iter().map(|c| c.norm()).fold(0.0, f64::max);
        worst = worst.max(dev);
    }
    Ok(worst)
}

/// Options for [`simulate`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationOptions {
    /// Initial state `X(0)` (length `pm`); zero when absent.
    pub x0: Option<DVector<f64>>,
    /// Time simulated and discarded before recording starts (multiple of `dt`).
    pub warmup: f64,
}

/// Euler path of state, output and driver on the grid `0, dt, …, n_steps·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinePath {
    dt: f64,
    n_steps: usize,
    lookahead: usize,
    state_dim: usize,
    out_dim: usize,
    drv_dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    l: Vec<f64>,
}

impl FinePath {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// `p - q - 1` of the generating model.
    pub fn lookahead(&self) -> usize {
        self.lookahead
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn output_dim(&self) -> usize {
        self.out_dim
    }

    pub fn driver_dim(&self) -> usize {
        self.drv_dim
    }

    pub fn x(&self, k: usize) -> &[f64] {
        &self.x[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn y(&self, k: usize) -> &[f64] {
        &self.y[k * self.out_dim..(k + 1) * self.out_dim]
    }

    pub fn l(&self, k: usize) -> &[f64] {
        &self.l[k * self.drv_dim..(k + 1) * self.drv_dim]
    }

    /// True unit increments `L(n) - L(n-1)`, `n = 1..=n_units`.
    pub fn unit_increments(&self, n_units: usize) -> Result<IncrementSample> {
        let per_unit = steps_in(1.0, self.dt, "unit interval")?;
        if n_units == 0 || n_units * per_unit > self.n_steps {
            return Err(Error::Grid(format!(
                "{n_units} unit increments exceed the simulated horizon {}",
                self.horizon()
            )));
        }
        let m = self.drv_dim;
        let mut values = Vec::with_capacity(n_units * m);
        for n in 1..=n_units {
            let (a, b) = (self.l((n - 1) * per_unit), self.l(n * per_unit));
            values.extend(b.iter().zip(a).map(|(b, a)| b - a));
        }
        IncrementSample::new(m, 1.0, values)
    }

    /// The prefix up to time `horizon`.
    pub fn truncated(&self, horizon: f64) -> Result<FinePath> {
        let n = steps_in(horizon, self.dt, "truncation horizon")?;
        if n > self.n_steps {
            return Err(Error::Grid(format!(
                "truncation horizon {horizon} exceeds path horizon {}",
                self.horizon()
            )));
        }
        Ok(FinePath {
            n_steps: n,
            x: self.x[..(n + 1) * self.state_dim].to_vec(),
            y: self.y[..(n + 1) * self.out_dim].to_vec(),
            l: self.l[..(n + 1) * self.drv_dim].to_vec(),
            ..*self
        })
    }
}

/// Number of `dt` steps in `span`, which must be a nonnegative whole multiple.
fn steps_in(span: f64, dt: f64, what: &str) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Grid(format!("step {dt} must be positive and finite")));
    }
    if !(span >= 0.0) || !span.is_finite() {
        return Err(Error::Grid(format!("{what} {span} must be nonnegative and finite")));
    }
    let ratio = span / dt;
    let n = Float::round(ratio);
    if (ratio - n).abs() > GRID_TOL * n.max(1.0) {
        return Err(Error::Grid(format!(
            "{what} {span} is not a whole multiple of {dt}"
        )));
    }
    Ok(n as usize)
}

/// Euler scheme `X_{k+1} = X_k + A X_k dt + E_p ΔL_k`, `Y_k = B̲ X_k`.
///
/// `horizon / dt` and `warmup / dt` must be whole numbers. During warm-up
/// nothing is stored; the recorded path starts at the state reached and
/// with `L(0) = 0`.
pub fn simulate<R: Rng + ?Sized>(
    model: &CarmaModel,
    ssr: &StateSpaceRealization,
    levy: &LevySpec,
    horizon: f64,
    dt: f64,
    opts: &SimulationOptions,
    rng: &mut R,
) -> Result<FinePath> {
    let (p, m, d) = (model.p(), model.m(), model.d());
    let n = p * m;
    if ssr.p != p || ssr.m != m || ssr.d != d || ssr.q != model.q() {
        return Err(Error::Dimension {
            context: "state-space realization for model",
            expected: n,
            found: ssr.a.nrows(),
        });
    }
    if levy.dim() != m {
        return Err(Error::Dimension {
            context: "Lévy driver",
            expected: m,
            found: levy.dim(),
        });
    }
    let n_steps = steps_in(horizon, dt, "horizon")?;
    if n_steps == 0 {
        return Err(Error::Grid("horizon must cover at least one step".into()));
    }
    let warm_steps = steps_in(opts.warmup, dt, "warm-up")?;

    let mut state = match &opts.x0 {
        Some(x0) if x0.len() != n => {
            return Err(Error::Dimension {
                context: "initial state",
                expected: n,
                found: x0.len(),
            })
        }
        Some(x0) => x0.as_slice().to_vec(),
        None => vec![0.0; n],
    };

    // row-major copies for the inner loop
    let a: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|ij| ssr.a[ij]).collect();
    let b: Vec<f64> = (0..d).flat_map(|i| (0..n).map(move |j| (i, j))).map(|ij| ssr.bline[ij]).collect();
    let last = (p - 1) * m;
    let mut dl = vec![0.0; m];
    let mut next = vec![0.0; n];

    let mut step = |state: &mut Vec<f64>, dl: &mut [f64], rng: &mut R, k: usize| -> Result<()> {
        levy.sample_into(dt, rng, dl);
        for i in 0..n {
            let row = &a[i * n..(i + 1) * n];
            let ax: f64 = row.iter().zip(state.iter()).map(|(r, x)| r * x).sum();
            next[i] = state[i] + ax * dt;
        }
        for (i, v) in dl.iter().enumerate() {
            next[last + i] += v;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup { step: k });
        }
        state.copy_from_slice(&next);
        Ok(())
    };

    for k in 0..warm_steps {
        step(&mut state, &mut dl, rng, k)?;
    }

    let mut x = Vec::with_capacity((n_steps + 1) * n);
    let mut y = Vec::with_capacity((n_steps + 1) * d);
    let mut l = Vec::with_capacity((n_steps + 1) * m);
    let mut level = vec![0.0; m];
    let emit = |state: &[f64], y: &mut Vec<f64>| {
        for i in 0..d {
            let row = &b[i * n..(i + 1) * n];
            y.push(row.iter().zip(state).map(|(r, x)| r * x).sum());
        }
    };
    x.extend_from_slice(&state);
    emit(&state, &mut y);
    l.extend_from_slice(&level);
    for k in 0..n_steps {
        step(&mut state, &mut dl, rng, warm_steps + k)?;
        for (lv, v) in level.iter_mut().zip(&dl) {
            *lv += v;
        }
        x.extend_from_slice(&state);
        emit(&state, &mut y);
        l.extend_from_slice(&level);
    }

    Ok(FinePath {
        dt,
        n_steps,
        lookahead: ssr.lookahead(),
        state_dim: n,
        out_dim: d,
        drv_dim: m,
        x,
        y,
        l,
    })
}

/// Observations `Y(0), Y(h), …, Y(N + kh)` with `1/h` a whole number and
/// `k = p - q - 1` trailing samples for the forward differences.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSeries {
    h: f64,
    per_unit: usize,
    n_units: usize,
    lookahead: usize,
    dim: usize,
    values: Vec<f64>,
}

impl SampledSeries {
    /// `values` is row-major, one `dim`-vector per grid point.
    pub fn new(
        h: f64,
        n_units: usize,
        lookahead: usize,
        dim: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let per_unit = steps_in(1.0, h, "unit interval")?;
        if per_unit == 0 {
            return Err(Error::Grid(format!("sampling interval {h} exceeds 1")));
        }
        if n_units == 0 {
            return Err(Error::Grid("observation horizon must be positive".into()));
        }
        if dim == 0 {
            return Err(Error::Dimension {
                context: "series dimension",
                expected: 1,
                found: 0,
            });
        }
        let len = n_units * per_unit + lookahead + 1;
        if values.len() != len * dim {
            return Err(Error::Dimension {
                context: "series length",
                expected: len * dim,
                found: values.len(),
            });
        }
        Ok(Self {
            h,
            per_unit,
            n_units,
            lookahead,
            dim,
            values,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `1/h`.
    pub fn per_unit(&self) -> usize {
        self.per_unit
    }

    /// Observation horizon `N`.
    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn lookahead(&self) -> usize {
        self.lookahead
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Y(kh)`.
    pub fn get(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Exact subsampling of `path` at spacing `h` over `[0, N + (p-q-1)h]`.
pub fn sample(path: &FinePath, h: f64, n_units: usize) -> Result<SampledSeries> {
    let stride = steps_in(h, path.dt, "sampling interval")?;
    if stride == 0 {
        return Err(Error::Grid(format!("sampling interval {h} is zero")));
    }
    let per_unit = steps_in(1.0, h, "unit interval")?;
    if per_unit == 0 {
        return Err(Error::Grid(format!("sampling interval {h} exceeds 1")));
    }
    let len = n_units * per_unit + path.lookahead + 1;
    let last = (len - 1) * stride;
    if last > path.n_steps {
        return Err(Error::Grid(format!(
            "sampling to time {} exceeds the simulated horizon {}",
            last as f64 * path.dt,
            path.horizon()
        )));
    }
    let mut values = Vec::with_capacity(len * path.out_dim);
    for k in 0..len {
        values.extend_from_slice(path.y(k * stride));
    }
    SampledSeries::new(h, n_units, path.lookahead, path.out_dim, values)
}
