//! Dense complex linear algebra used by every layer above: validated
//! Hermitian matrices with deterministic eigensystems, spectral matrix
//! functions, polar decomposition, support-restricted pseudo-inverse, and the
//! matrix exponential.
//!
//! All routines are deterministic: identical inputs produce bit-identical
//! outputs (eigenvalues are sorted ascending with index tie-breaks, singular
//! triplets come from one SVD call).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Relative asymmetry accepted when constructing a [`HermitianMatrix`].
pub const HERM_TOL: f64 = 1e-12;
/// Default relative eigenvalue cutoff for [`HermitianMatrix::pinv_on_support`].
pub const PINV_RELCUT: f64 = 1e-10;
/// Operators whose largest |eigenvalue| falls below this floor are treated as
/// zero and cannot be pseudo-inverted.
pub const ZERO_FLOOR: f64 = 1e-14;
/// Width of the roundoff window clamped by [`acos_clamped`] / [`sqrt_clamped`].
pub const CLAMP_WINDOW: f64 = 1e-9;
/// Frobenius-norm bound beyond which [`expm`] refuses the input; the
/// scaling-and-squaring core loses accuracy long before f64 overflows.
pub const EXPM_MAX_NORM: f64 = 500.0;

const EIG_MAX_ITER: usize = 100_000;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("asymmetry {asym:.3e} exceeds Hermitian tolerance {tol:.3e}")]
    NotHermitian { asym: f64, tol: f64 },
    #[error("iterative decomposition failed to converge")]
    NonConvergence,
    #[error("scalar function not finite at eigenvalue {value:.6e}")]
    Domain { value: f64 },
    #[error("operator is numerically zero (max |eigenvalue| {max:.3e} < floor {floor:.3e})")]
    ZeroOperator { max: f64, floor: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("norm {norm:.3e} exceeds expm bound {bound:.3e}")]
    NormOverflow { norm: f64, bound: f64 },
}

pub(crate) fn is_finite_mat(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Exact Hermitian part (m + m†)/2.
pub(crate) fn symmetrize(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// A square matrix checked and stored as exactly Hermitian.
///
/// Construction rejects inputs whose asymmetry ‖M − M†‖ exceeds
/// [`HERM_TOL`]·‖M‖ and stores the symmetrized part, so downstream spectral
/// code never sees asymmetry.
#[derive(Debug, Clone)]
pub struct HermitianMatrix {
    m: CMat,
}

/// Eigensystem of a [`HermitianMatrix`]: real eigenvalues ascending,
/// `vectors` column k paired with `values[k]`, unitary within 1e-12.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermitianMatrix {
    pub fn new(m: CMat) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        if !is_finite_mat(&m) {
            return Err(LinalgError::NonFinite);
        }
        let tol = HERM_TOL * m.norm();
        let asym = (&m - m.adjoint()).norm();
        if asym > tol {
            return Err(LinalgError::NotHermitian { asym, tol });
        }
        Ok(Self { m: symmetrize(&m) })
    }

    /// Wrap a matrix that is Hermitian by construction (already symmetrized).
    pub(crate) fn wrap_symmetrized(m: CMat) -> Self {
        Self { m: symmetrize(&m) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    /// Real trace of the stored Hermitian matrix.
    pub fn trace_re(&self) -> f64 {
        self.m.trace().re
    }

    /// Deterministic eigensystem: values ascending, ties broken by original
    /// index so repeated calls agree bitwise.
    pub fn eig(&self) -> Result<EigenSystem, LinalgError> {
        let n = self.m.nrows();
        let se = self
            .m
            .clone()
            .try_symmetric_eigen(f64::EPSILON, EIG_MAX_ITER)
            .ok_or(LinalgError::NonConvergence)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]).then(a.cmp(&b)));
        let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
        let vectors = se.eigenvectors.select_columns(&order);
        Ok(EigenSystem { values, vectors })
    }

    /// Spectral function f(M) = V f(Λ) V†. Errors if f is non-finite at any
    /// eigenvalue.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> Result<HermitianMatrix, LinalgError> {
        let es = self.eig()?;
        let mut mapped = Vec::with_capacity(es.values.len());
        for &l in &es.values {
            let y = f(l);
            if !y.is_finite() {
                return Err(LinalgError::Domain { value: l });
            }
            mapped.push(C64::new(y, 0.0));
        }
        let diag = CMat::from_diagonal(&CVec::from_vec(mapped));
        let m = &es.vectors * diag * es.vectors.adjoint();
        Ok(HermitianMatrix::wrap_symmetrized(m))
    }

    /// Moore-Penrose inverse restricted to the support: eigenvalues with
    /// |λ| ≤ relcut·max|λ| invert to zero. A numerically zero operator
    /// (max |λ| < [`ZERO_FLOOR`]) is an error.
    pub fn pinv_on_support(&self, relcut: f64) -> Result<HermitianMatrix, LinalgError> {
        let es = self.eig()?;
        let lmax = es.values.iter().fold(0.0_f64, |a, &l| a.max(l.abs()));
        if lmax < ZERO_FLOOR {
            return Err(LinalgError::ZeroOperator { max: lmax, floor: ZERO_FLOOR });
        }
        let cut = relcut * lmax;
        let mapped: Vec<C64> = es
            .values
            .iter()
            .map(|&l| if l.abs() > cut { C64::new(1.0 / l, 0.0) } else { C64::new(0.0, 0.0) })
            .collect();
        let diag = CMat::from_diagonal(&CVec::from_vec(mapped));
        let m = &es.vectors * diag * es.vectors.adjoint();
        Ok(HermitianMatrix::wrap_symmetrized(m))
    }

    /// Orthogonal projector onto the support (same cutoff rule as
    /// [`Self::pinv_on_support`]).
    pub fn support_projector(&self, relcut: f64) -> Result<HermitianMatrix, LinalgError> {
        let es = self.eig()?;
        let lmax = es.values.iter().fold(0.0_f64, |a, &l| a.max(l.abs()));
        let cut = relcut * lmax;
        let mapped: Vec<C64> = es
            .values
            .iter()
            .map(|&l| if l.abs() > cut { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
            .collect();
        let diag = CMat::from_diagonal(&CVec::from_vec(mapped));
        let m = &es.vectors * diag * es.vectors.adjoint();
        Ok(HermitianMatrix::wrap_symmetrized(m))
    }
}

/// Factors of A = U·P with U unitary and P PSD Hermitian.
///
/// U is completed on the kernel of A by pairing the SVD bases (U = W·V† from
/// A = W Σ V†), so it is unitary even for rank-deficient A.
#[derive(Debug, Clone)]
pub struct PolarFactors {
    pub unitary: CMat,
    pub positive: HermitianMatrix,
}

/// Polar decomposition via one SVD: A = (W V†)·(V Σ V†).
pub fn polar(a: &CMat) -> Result<PolarFactors, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    if !is_finite_mat(a) {
        return Err(LinalgError::NonFinite);
    }
    let svd = a
        .clone()
        .try_svd(true, true, f64::EPSILON, EIG_MAX_ITER)
        .ok_or(LinalgError::NonConvergence)?;
    let w = svd.u.ok_or(LinalgError::NonConvergence)?;
    let vt = svd.v_t.ok_or(LinalgError::NonConvergence)?;
    let unitary = &w * &vt;
    let sigma: Vec<C64> = svd.singular_values.iter().map(|&s| C64::new(s, 0.0)).collect();
    let diag = CMat::from_diagonal(&CVec::from_vec(sigma));
    let positive = vt.adjoint() * diag * &vt;
    Ok(PolarFactors { unitary, positive: HermitianMatrix::wrap_symmetrized(positive) })
}

/// Matrix exponential of a general (not necessarily Hermitian) matrix.
pub fn expm(m: &CMat) -> Result<CMat, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if !is_finite_mat(m) {
        return Err(LinalgError::NonFinite);
    }
    let norm = m.norm();
    if norm > EXPM_MAX_NORM {
        return Err(LinalgError::NormOverflow { norm, bound: EXPM_MAX_NORM });
    }
    Ok(m.exp())
}

/// ‖U†U − I‖ in Frobenius norm.
pub fn unitarity_defect(u: &CMat) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    (u.adjoint() * u - CMat::identity(u.nrows(), u.ncols())).norm()
}

/// arccos with a one-sided roundoff guard: inputs within [`CLAMP_WINDOW`]
/// beyond ±1 clamp to the endpoint; anything further out is NaN (surfaced as
/// a Domain error by [`HermitianMatrix::apply_fn`]).
pub fn acos_clamped(x: f64) -> f64 {
    if (1.0..=1.0 + CLAMP_WINDOW).contains(&x) {
        0.0
    } else if (-1.0 - CLAMP_WINDOW..=-1.0).contains(&x) {
        std::f64::consts::PI
    } else {
        x.acos()
    }
}

/// sqrt with the same guard for eigenvalues pushed slightly negative by
/// roundoff.
pub fn sqrt_clamped(x: f64) -> f64 {
    if (-CLAMP_WINDOW..0.0).contains(&x) {
        0.0
    } else {
        x.sqrt()
    }
}

/// Column-stacking vectorization (column-major, matching the convention
/// vec(A·X·B) = (Bᵀ ⊗ A)·vec(X) used by the superoperator layer).
pub fn vec_col(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_col`] for a d×d matrix.
pub fn unvec_col(d: usize, v: &CVec) -> CMat {
    assert_eq!(v.len(), d * d, "vectorized length must be d^2");
    CMat::from_column_slice(d, d, v.as_slice())
}

/// Kronecker product a ⊗ b.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Identity of dimension d.
pub fn eye(d: usize) -> CMat {
    CMat::identity(d, d)
}

/// Deterministic unitary whose first column is the given unit vector
/// (Householder reflection times a phase on the first slot).
pub fn unitary_with_first_column(v: &CVec) -> Result<CMat, LinalgError> {
    let d = v.len();
    if d == 0 {
        return Err(LinalgError::DimensionMismatch("empty vector".into()));
    }
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    if (v.norm() - 1.0).abs() > 1e-10 {
        return Err(LinalgError::DimensionMismatch(format!(
            "vector norm {} is not 1",
            v.norm()
        )));
    }
    let mut e0 = CVec::zeros(d);
    e0[0] = C64::new(1.0, 0.0);
    if (v - &e0).norm() < 1e-14 {
        return Ok(eye(d));
    }
    let phase = if v[0].norm() > 1e-14 { v[0] / C64::new(v[0].norm(), 0.0) } else { C64::new(1.0, 0.0) };
    let t = &e0 * phase;
    let u = v - &t;
    let uu = u.adjoint() * &u;
    let h = eye(d) - (&u * u.adjoint()) * (C64::new(2.0, 0.0) / uu[(0, 0)]);
    let mut diag = eye(d);
    diag[(0, 0)] = phase;
    Ok(h * diag)
}

/// Matrix power by binary exponentiation (exact repeated multiplication).
pub fn mat_power(m: &CMat, mut n: u64) -> CMat {
    let d = m.nrows();
    let mut base = m.clone();
    let mut acc = CMat::identity(d, m.ncols());
    while n > 0 {
        if n & 1 == 1 {
            acc = &acc * &base;
        }
        n >>= 1;
        if n > 0 {
            base = &base * &base;
        }
    }
    acc
}
