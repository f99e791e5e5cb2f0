//! Matrix polynomials and block companion matrices.
//!
//! A monic polynomial `R(z) = z^r + M_1 z^{r-1} + … + M_r` with `s×s`
//! coefficients has the block companion matrix
//!
//! ```text
//!     [  0    I    0   …   0  ]
//!     [  0    0    I   …   0  ]
//! M = [  ⋮              ⋱   ⋮  ]
//!     [  0    0    0   …   I  ]
//!     [ -M_r -M_{r-1}  …  -M_1 ]
//! ```
//!
//! whose resolvent `(zI - M)^{-1}` is available blockwise in closed form
//! ([`resolvent_block`]).

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix};
use num_traits::Float;

use crate::error::{Error, Result};

/// Real parts with magnitude below this are never accepted as stable.
pub const HURWITZ_ZERO_TOL: f64 = 1e-12;

/// `R(z) = z^r + M_1 z^{r-1} + … + M_r` with square `s×s` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPolynomialMonic {
    block_dim: usize,
    coeffs: Vec<DMatrix<f64>>,
}

impl MatrixPolynomialMonic {
    /// `coeffs` holds `M_1, …, M_r`.
    pub fn new(block_dim: usize, coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        if block_dim == 0 {
            return Err(Error::InvalidParameter {
                name: "block_dim",
                reason: "must be positive".into(),
            });
        }
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter {
                name: "degree",
                reason: "must be positive".into(),
            });
        }
        for c in &coeffs {
            check_shape(c, block_dim, block_dim, "monic polynomial coefficient")?;
        }
        Ok(Self { block_dim, coeffs })
    }

    /// Scalar polynomial `z^r + c_1 z^{r-1} + … + c_r`.
    pub fn scalar(coeffs: &[f64]) -> Result<Self> {
        Self::new(
            1,
            coeffs.iter().map(|&c| DMatrix::from_element(1, 1, c)).collect(),
        )
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    /// `M_k` for `k = 1..=r`.
    pub fn coeff(&self, k: usize) -> &DMatrix<f64> {
        &self.coeffs[k - 1]
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    /// Evaluates `R(z)` by Horner's scheme.
    pub fn eval(&self, z: Complex<f64>) -> DMatrix<Complex<f64>> {
        let s = self.block_dim;
        let mut acc = DMatrix::<Complex<f64>>::identity(s, s);
        for c in &self.coeffs {
            acc = acc * z + complexify(c);
        }
        acc
    }
}

/// `Q(z) = B_0 + B_1 z + … + B_q z^q` with `rows×cols` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPolynomialGeneral {
    rows: usize,
    cols: usize,
    coeffs: Vec<DMatrix<f64>>,
}

impl MatrixPolynomialGeneral {
    /// `coeffs` holds `B_0, …, B_q` (ascending powers).
    pub fn new(rows: usize, cols: usize, coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter {
                name: "coeffs",
                reason: "need at least the constant coefficient".into(),
            });
        }
        for c in &coeffs {
            check_shape(c, rows, cols, "polynomial coefficient")?;
        }
        Ok(Self { rows, cols, coeffs })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `B_j` for `j = 0..=q`.
    pub fn coeff(&self, j: usize) -> &DMatrix<f64> {
        &self.coeffs[j]
    }

    pub fn eval(&self, z: Complex<f64>) -> DMatrix<Complex<f64>> {
        let mut acc = DMatrix::<Complex<f64>>::zeros(self.rows, self.cols);
        for c in self.coeffs.iter().rev() {
            acc = acc * z + complexify(c);
        }
        acc
    }
}

/// Block companion matrix of a [`MatrixPolynomialMonic`].
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionMatrix {
    block_dim: usize,
    degree: usize,
    matrix: DMatrix<f64>,
}

impl CompanionMatrix {
    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

/// Identity blocks on the super-diagonal, `(-M_r, …, -M_1)` in the last block row.
pub fn companion(poly: &MatrixPolynomialMonic) -> CompanionMatrix {
    let s = poly.block_dim();
    let r = poly.degree();
    let n = r * s;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..r.saturating_sub(1) {
        for k in 0..s {
            m[(i * s + k, (i + 1) * s + k)] = 1.0;
        }
    }
    let last = (r - 1) * s;
    for j in 0..r {
        // block column j (0-based) carries -M_{r-j}
        let c = poly.coeff(r - j);
        for a in 0..s {
            for b in 0..s {
                m[(last + a, j * s + b)] = -c[(a, b)];
            }
        }
    }
    CompanionMatrix {
        block_dim: s,
        degree: r,
        matrix: m,
    }
}

/// Block `(i, j)` (1-based) of `(zI - M)^{-1}` in closed form:
///
/// ```text
/// S_ij(z) = R(z)^{-1} · ( z^{r-1+i-j} I + Σ_{k=1}^{r-j} M_k z^{r-1-k+i-j} )   if j >= i
/// S_ij(z) = R(z)^{-1} · ( -Σ_{k=r-j+1}^{r} M_k z^{r-1-k+i-j} )                 if j <  i
/// ```
pub fn resolvent_block(
    poly: &MatrixPolynomialMonic,
    z: Complex<f64>,
    i: usize,
    j: usize,
) -> Result<DMatrix<Complex<f64>>> {
    let r = poly.degree();
    if i == 0 || i > r || j == 0 || j > r {
        return Err(Error::InvalidParameter {
            name: "block index",
            reason: format!("({i}, {j}) outside 1..={r}"),
        });
    }
    let r_inv = poly
        .eval(z)
        .try_inverse()
        .ok_or(Error::SingularAt { re: z.re, im: z.im })?;
    Ok(r_inv * resolvent_numerator(poly, z, i, j))
}

fn resolvent_numerator(
    poly: &MatrixPolynomialMonic,
    z: Complex<f64>,
    i: usize,
    j: usize,
) -> DMatrix<Complex<f64>> {
    let s = poly.block_dim();
    let r = poly.degree() as i64;
    let (i, j) = (i as i64, j as i64);
    let zpow = |e: i64| z.powi(e as i32);
    let mut acc = DMatrix::<Complex<f64>>::zeros(s, s);
    if j >= i {
        let id = DMatrix::<Complex<f64>>::identity(s, s);
        acc += id * zpow(r - 1 + i - j);
        for k in 1..=(r - j) {
            acc += complexify(poly.coeff(k as usize)) * zpow(r - 1 - k + i - j);
        }
    } else {
        for k in (r - j + 1)..=r {
            acc -= complexify(poly.coeff(k as usize)) * zpow(r - 1 - k + i - j);
        }
    }
    acc
}

/// Assembles the full `rs×rs` resolvent from its closed-form blocks.
pub fn resolvent(poly: &MatrixPolynomialMonic, z: Complex<f64>) -> Result<DMatrix<Complex<f64>>> {
    let s = poly.block_dim();
    let r = poly.degree();
    let r_inv = poly
        .eval(z)
        .try_inverse()
        .ok_or(Error::SingularAt { re: z.re, im: z.im })?;
    let mut out = DMatrix::zeros(r * s, r * s);
    for i in 1..=r {
        for j in 1..=r {
            let blk = &r_inv * resolvent_numerator(poly, z, i, j);
            out.view_mut(((i - 1) * s, (j - 1) * s), (s, s))
                .copy_from(&blk);
        }
    }
    Ok(out)
}

/// Eigenvalues of a general real square matrix, sorted by real then imaginary part.
pub fn eigenvalues(matrix: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    check_square(matrix, "eigenvalues")?;
    if matrix.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::try_new(matrix.clone(), f64::EPSILON, 10_000)
        .ok_or(Error::EigenSolver)?;
    let mut ev: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// True iff every eigenvalue has real part below `-margin` (and below
/// `-HURWITZ_ZERO_TOL`, so eigenvalues numerically on the axis are rejected).
pub fn is_hurwitz(matrix: &DMatrix<f64>, margin: f64) -> Result<bool> {
    let bound = -margin.max(HURWITZ_ZERO_TOL);
    Ok(eigenvalues(matrix)?.iter().all(|l| l.re < bound))
}

/// Numerical rank from the singular values.
pub fn numerical_rank(matrix: &DMatrix<f64>) -> usize {
    if matrix.is_empty() {
        return 0;
    }
    let sv = matrix.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    let tol = max * f64::EPSILON * matrix.nrows().max(matrix.ncols()) as f64;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Least-squares left inverse `(MᵀM)^{-1}Mᵀ` of a full-column-rank `d×m` matrix.
pub fn left_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (d, cols) = m.shape();
    if cols > d {
        return Err(Error::RankDeficient {
            rank: numerical_rank(m),
            required: cols,
        });
    }
    let rank = numerical_rank(m);
    if rank < cols {
        return Err(Error::RankDeficient {
            rank,
            required: cols,
        });
    }
    let mt = m.transpose();
    let gram = &mt * m;
    let chol = gram.cholesky().ok_or(Error::RankDeficient {
        rank,
        required: cols,
    })?;
    Ok(chol.solve(&mt))
}

/// Solves `A X = B` for square nonsingular `A`.
pub(crate) fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone().lu().solve(b).ok_or_else(|| Error::RankDeficient {
        rank: numerical_rank(a),
        required: a.nrows(),
    })
}

/// Integer power of a square matrix by repeated squaring.
pub fn matrix_power(a: &DMatrix<f64>, mut k: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut base = a.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

// Backward-error thresholds θ_m for the diagonal Padé approximants.
const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068;
const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const PADE_9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Matrix exponential by scaling and squaring with diagonal Padé
/// approximants of degree 3, 5, 7, 9 or 13 chosen from the 1-norm.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm requires a square matrix");
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let norm = one_norm(a);
    let id = DMatrix::<f64>::identity(n, n);

    for (theta, coeffs) in [
        (THETA_3, &PADE_3[..]),
        (THETA_5, &PADE_5[..]),
        (THETA_7, &PADE_7[..]),
        (THETA_9, &PADE_9[..]),
    ] {
        if norm <= theta {
            let (u, v) = pade_low(a, coeffs, &id);
            return pade_solve(&u, &v);
        }
    }

    let s = if norm > THETA_13 {
        Float::ceil(Float::log2(norm / THETA_13)).max(0.0) as i32
    } else {
        0
    };
    let scaled = a * Float::powi(2.0_f64, -s);
    let (u, v) = pade_13(&scaled, &id);
    let mut r = pade_solve(&u, &v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn pade_low(a: &DMatrix<f64>, b: &[f64], id: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let a2 = a * a;
    // Even powers A^0, A^2, A^4, ...
    let mut even = alloc::vec![id.clone()];
    for k in 1..b.len().div_ceil(2) {
        even.push(&even[k - 1] * &a2);
    }
    let mut u_inner = DMatrix::zeros(a.nrows(), a.ncols());
    let mut v = DMatrix::zeros(a.nrows(), a.ncols());
    for (k, &c) in b.iter().enumerate() {
        if k % 2 == 1 {
            u_inner += &even[k / 2] * c;
        } else {
            v += &even[k / 2] * c;
        }
    }
    (a * u_inner, v)
}

fn pade_13(a: &DMatrix<f64>, id: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &PADE_13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (u_hi + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + id * b[1]);
    let v_hi = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_hi + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + id * b[0];
    (u, v)
}

fn pade_solve(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular for norms within the θ bounds")
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub(crate) fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|x| Complex::new(x, 0.0))
}

pub(crate) fn check_shape(
    m: &DMatrix<f64>,
    rows: usize,
    cols: usize,
    context: &'static str,
) -> Result<()> {
    if m.nrows() != rows {
        return Err(Error::Dimension {
            context,
            expected: rows,
            found: m.nrows(),
        });
    }
    if m.ncols() != cols {
        return Err(Error::Dimension {
            context,
            expected: cols,
            found: m.ncols(),
        });
    }
    Ok(())
}

fn check_square(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected: m.nrows(),
            found: m.ncols(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn third_order() -> MatrixPolynomialMonic {
        MatrixPolynomialMonic::scalar(&[2.0, 1.5, 0.5]).unwrap()
    }

    #[test]
    fn companion_layout_scalar() {
        let c = companion(&third_order());
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -0.5, -1.5, -2.0],
        );
        assert_eq!(c.as_matrix(), &expected);
    }

    #[test]
    fn companion_degree_one_is_negated_coefficient() {
        let m1 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 4.0]);
        let p = MatrixPolynomialMonic::new(2, vec![m1.clone()]).unwrap();
        assert_eq!(companion(&p).into_matrix(), -m1);
    }

    #[test]
    fn companion_eigenvalues_are_roots() {
        let p = MatrixPolynomialMonic::scalar(&[3.0, 2.0]).unwrap();
        let ev = eigenvalues(companion(&p).as_matrix()).unwrap();
        assert!((ev[0].re + 2.0).abs() < 1e-12 && ev[0].im.abs() < 1e-12);
        assert!((ev[1].re + 1.0).abs() < 1e-12 && ev[1].im.abs() < 1e-12);
    }

    #[test]
    fn resolvent_single_block_is_polynomial_inverse() {
        let m1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.25, 2.0]);
        let p = MatrixPolynomialMonic::new(2, vec![m1]).unwrap();
        let z = Complex::new(0.3, -0.7);
        let s11 = resolvent_block(&p, z, 1, 1).unwrap();
        let direct = p.eval(z).try_inverse().unwrap();
        assert!((s11 - direct).norm() < 1e-14);
    }

    #[test]
    fn resolvent_at_zero_matches_analytic_inverse() {
        // z^2 + 3z + 2: M = [[0,1],[-2,-3]], (-M)^{-1} = [[1.5, 0.5], [-1, 0]]
        let p = MatrixPolynomialMonic::scalar(&[3.0, 2.0]).unwrap();
        let s = resolvent(&p, Complex::new(0.0, 0.0)).unwrap();
        let expected = [[1.5, 0.5], [-1.0, 0.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((s[(i, j)] - Complex::new(expected[i][j], 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn resolvent_rejects_singular_point() {
        let p = MatrixPolynomialMonic::scalar(&[3.0, 2.0]).unwrap();
        let err = resolvent_block(&p, Complex::new(-1.0, 0.0), 1, 1).unwrap_err();
        assert!(matches!(err, Error::SingularAt { re, .. } if re == -1.0));
    }

    #[test]
    fn hurwitz_cases() {
        assert!(is_hurwitz(companion(&third_order()).as_matrix(), 0.0).unwrap());
        assert!(!is_hurwitz(&DMatrix::zeros(3, 3), 0.0).unwrap());
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-0.5, -3.0]));
        assert!(is_hurwitz(&d, 0.0).unwrap());
        assert!(!is_hurwitz(&d, 1.0).unwrap());
    }

    #[test]
    fn left_inverse_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((left_inverse(&id).unwrap() - &id).norm() < 1e-15);
        let col = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let li = left_inverse(&col).unwrap();
        assert!((li[(0, 0)] - 0.5).abs() < 1e-15 && (li[(0, 1)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn left_inverse_reports_rank() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert_eq!(
            left_inverse(&m).unwrap_err(),
            Error::RankDeficient {
                rank: 1,
                required: 2
            }
        );
    }

    #[test]
    fn expm_basic_values() {
        assert_eq!(expm(&DMatrix::zeros(3, 3)), DMatrix::identity(3, 3));
        let e = expm(&DMatrix::from_element(1, 1, -1.0));
        assert!((e[(0, 0)] - 0.367_879_441_171_442_33).abs() < 1e-15);
        // large norm exercises the squaring phase
        let e = expm(&DMatrix::from_element(1, 1, 9.0));
        assert!((e[(0, 0)] / 8_103.083_927_575_384 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn expm_nilpotent() {
        let n = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let e = expm(&(&n * 4.0));
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, 4.0, 8.0, 0.0, 1.0, 4.0, 0.0, 0.0, 1.0]);
        assert!((e - expected).norm() < 1e-12);
    }

    #[test]
    fn matrix_power_small() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let p = matrix_power(&a, 5);
        assert_eq!(p, DMatrix::from_row_slice(2, 2, &[1.0, 5.0, 0.0, 1.0]));
        assert_eq!(matrix_power(&a, 0), DMatrix::identity(2, 2));
    }
}
