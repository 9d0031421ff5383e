//! Markovian generators of completely positive semigroups, in two
//! interchangeable presentations:
//!
//! - [`GKSGenerator`]: a Hamiltonian plus a coefficient matrix A over a
//!   traceless orthonormal operator basis {F_i}, with dissipator
//!   Σ_ij a_ij (F_i ρ F_j† − ½{F_j†F_i, ρ}). The index order pairs a
//!   rank-one A = c c† with the single operator L = Σ_i c_i F_i.
//! - [`CanonicalGenerator`]: a Hamiltonian plus traceless operators {L_k},
//!   with dissipator Σ_k (L_k ρ L_k† − ½{L_k†L_k, ρ}).
//!
//! [`canonicalize`] diagonalizes A to pass from the first form to the second;
//! [`gks_from_lindblad_op`] embeds a single operator into the first form.
//! [`liouvillian`] builds the column-stacking superoperator, and
//! [`propagate`] applies its exact exponential.

use thiserror::Error;

use crate::channel::{ChannelError, DensityMatrix};
use crate::linalg::{
    self, eye, is_finite_mat, kron, vec_col, unvec_col, C64, CMat, HermitianMatrix,
    LinalgError,
};

/// Absolute trace bound for basis elements.
pub const BASIS_TRACE_TOL: f64 = 1e-12;
/// Gram-matrix deviation bound for basis orthonormality.
pub const BASIS_ORTHO_TOL: f64 = 1e-12;
/// PSD floor for the GKS coefficient matrix at construction.
pub const GKS_EIG_TOL: f64 = 1e-10;
/// Canonical operators must be traceless within this absolute bound.
pub const L_TRACE_TOL: f64 = 1e-10;
/// Relative cutoff below which canonicalize drops a coefficient eigenvalue.
pub const CANON_RELCUT: f64 = 1e-12;
/// canonicalize rejects coefficient eigenvalues below this floor.
pub const CANON_NEG_TOL: f64 = 1e-8;
/// Structural tolerance for Hermiticity preservation of a superoperator.
pub const SUPEROP_HERM_TOL: f64 = 1e-10;
/// Tolerance for trace annihilation of a generator superoperator.
pub const SUPEROP_TRACE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LindbladError {
    #[error("basis has {got} elements, expected {expected} for dimension {d}")]
    BasisSize { d: usize, expected: usize, got: usize },
    #[error("basis element {index} has |trace| {trace_abs:.3e} beyond {BASIS_TRACE_TOL:.0e}")]
    BasisNotTraceless { index: usize, trace_abs: f64 },
    #[error("basis Gram deviation {defect:.3e} at pair ({i},{j}) beyond {BASIS_ORTHO_TOL:.0e}")]
    BasisNotOrthonormal { i: usize, j: usize, defect: f64 },
    #[error("coefficient matrix is {got}x{got2}, expected {expected}x{expected}", got2 = got)]
    CoefficientSize { expected: usize, got: usize },
    #[error("coefficient matrix eigenvalue {min_eig:.3e} below floor -{tol:.0e}")]
    CoefficientNotPositive { min_eig: f64, tol: f64 },
    #[error("operator {index} has |trace| {trace_abs:.3e} beyond {L_TRACE_TOL:.0e}")]
    OperatorNotTraceless { index: usize, trace_abs: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("negative evolution time {t}")]
    NegativeTime { t: f64 },
    #[error("superoperator breaks Hermiticity preservation (defect {defect:.3e})")]
    NotHermiticityPreserving { defect: f64 },
    #[error("superoperator leaks trace (defect {defect:.3e})")]
    TraceLeak { defect: f64 },
    #[error("operator does not lie in the span of the basis (residual {residual:.3e})")]
    BasisMismatch { residual: f64 },
    #[error("non-finite entries")]
    NonFinite,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// A traceless orthonormal operator basis {F_i}, i = 1..d²−1, with
/// tr(F_i†F_j) = δ_ij.
#[derive(Debug, Clone)]
pub struct OperatorBasis {
    d: usize,
    elements: Vec<CMat>,
}

impl OperatorBasis {
    /// Validate a caller-supplied basis (d²−1 traceless orthonormal elements).
    pub fn new(elements: Vec<CMat>) -> Result<Self, LindbladError> {
        if elements.is_empty() {
            return Err(LindbladError::BasisSize { d: 0, expected: 0, got: 0 });
        }
        let d = elements[0].nrows();
        let expected = d * d - 1;
        if elements.len() != expected {
            return Err(LindbladError::BasisSize { d, expected, got: elements.len() });
        }
        for (index, f) in elements.iter().enumerate() {
            if f.nrows() != d || f.ncols() != d {
                return Err(LindbladError::DimensionMismatch(format!(
                    "basis element {index} is {}x{}, expected {d}x{d}",
                    f.nrows(),
                    f.ncols()
                )));
            }
            if !is_finite_mat(f) {
                return Err(LindbladError::NonFinite);
            }
            let trace_abs = f.trace().norm();
            if trace_abs > BASIS_TRACE_TOL {
                return Err(LindbladError::BasisNotTraceless { index, trace_abs });
            }
        }
        for i in 0..elements.len() {
            for j in i..elements.len() {
                let g = (elements[i].adjoint() * &elements[j]).trace();
                let target = if i == j { 1.0 } else { 0.0 };
                let defect = (g - C64::new(target, 0.0)).norm();
                if defect > BASIS_ORTHO_TOL {
                    return Err(LindbladError::BasisNotOrthonormal { i, j, defect });
                }
            }
        }
        Ok(Self { d, elements })
    }

    /// Generalized Gell-Mann basis, normalized to tr(F_i†F_j) = δ_ij.
    ///
    /// Deterministic ordering: for each index pair (j, k) with j < k in
    /// lexicographic order, the symmetric element (E_jk + E_kj)/√2 followed by
    /// the antisymmetric element (−iE_jk + iE_kj)/√2; then the d−1 diagonal
    /// elements (Σ_{m<l} E_mm − l·E_ll)/√(l(l+1)) for l = 1..d−1.
    /// For d = 2 this is exactly {σx/√2, σy/√2, σz/√2}.
    pub fn gell_mann(d: usize) -> Result<Self, LindbladError> {
        if d < 2 {
            return Err(LindbladError::DimensionMismatch(format!("dimension {d} < 2")));
        }
        let inv_sqrt2 = C64::new(1.0 / 2.0_f64.sqrt(), 0.0);
        let mut elements = Vec::with_capacity(d * d - 1);
        for j in 0..d {
            for k in (j + 1)..d {
                let mut sym = CMat::zeros(d, d);
                sym[(j, k)] = inv_sqrt2;
                sym[(k, j)] = inv_sqrt2;
                elements.push(sym);
                let mut asym = CMat::zeros(d, d);
                asym[(j, k)] = C64::new(0.0, -1.0) * inv_sqrt2;
                asym[(k, j)] = C64::new(0.0, 1.0) * inv_sqrt2;
                elements.push(asym);
            }
        }
        for l in 1..d {
            let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
            let mut diag = CMat::zeros(d, d);
            for m in 0..l {
                diag[(m, m)] = C64::new(norm, 0.0);
            }
            diag[(l, l)] = C64::new(-(l as f64) * norm, 0.0);
            elements.push(diag);
        }
        Self::new(elements)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[CMat] {
        &self.elements
    }

    /// Expansion coefficients c_i = tr(F_i† M) of a traceless operator.
    pub fn coefficients(&self, m: &CMat) -> Vec<C64> {
        self.elements.iter().map(|f| (f.adjoint() * m).trace()).collect()
    }
}

/// Generator in coefficient-matrix form: H plus A over a basis.
#[derive(Debug, Clone)]
pub struct GKSGenerator {
    h: HermitianMatrix,
    basis: OperatorBasis,
    a: HermitianMatrix,
}

impl GKSGenerator {
    /// Validates Hamiltonian dimension, coefficient size (d²−1), and
    /// positivity of A within −[`GKS_EIG_TOL`].
    pub fn new(h: HermitianMatrix, basis: OperatorBasis, a: HermitianMatrix) -> Result<Self, LindbladError> {
        let d = basis.dim();
        if h.dim() != d {
            return Err(LindbladError::DimensionMismatch(format!(
                "Hamiltonian dim {} vs basis dim {d}",
                h.dim()
            )));
        }
        if a.dim() != basis.len() {
            return Err(LindbladError::CoefficientSize { expected: basis.len(), got: a.dim() });
        }
        let min_eig = a.eig()?.values[0];
        if min_eig < -GKS_EIG_TOL {
            return Err(LindbladError::CoefficientNotPositive { min_eig, tol: GKS_EIG_TOL });
        }
        Ok(Self { h, basis, a })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn hamiltonian(&self) -> &HermitianMatrix {
        &self.h
    }

    pub fn basis(&self) -> &OperatorBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &HermitianMatrix {
        &self.a
    }
}

/// Generator in operator form: H plus traceless {L_k}.
#[derive(Debug, Clone)]
pub struct CanonicalGenerator {
    h: HermitianMatrix,
    ops: Vec<CMat>,
}

/// Record of the traceless projection applied to one operator by
/// [`CanonicalGenerator::with_trace_split`].
#[derive(Debug, Clone)]
pub struct TraceSplit {
    pub index: usize,
    /// Removed multiple of the identity: L = L₀ + α·I.
    pub alpha: C64,
}

impl CanonicalGenerator {
    /// Validates dimensions and tracelessness (|tr L_k| ≤ [`L_TRACE_TOL`]).
    pub fn new(h: HermitianMatrix, ops: Vec<CMat>) -> Result<Self, LindbladError> {
        let d = h.dim();
        for (index, l) in ops.iter().enumerate() {
            if l.nrows() != d || l.ncols() != d {
                return Err(LindbladError::DimensionMismatch(format!(
                    "operator {index} is {}x{}, expected {d}x{d}",
                    l.nrows(),
                    l.ncols()
                )));
            }
            if !is_finite_mat(l) {
                return Err(LindbladError::NonFinite);
            }
            let trace_abs = l.trace().norm();
            if trace_abs > L_TRACE_TOL {
                return Err(LindbladError::OperatorNotTraceless { index, trace_abs });
            }
        }
        Ok(Self { h, ops })
    }

    /// Accepts arbitrary operators by splitting each as L = L₀ + α·I with
    /// α = tr(L)/d. The identity component contributes only a Hamiltonian
    /// shift, which is folded in exactly:
    /// H ← H + Σ_k (i/2)(ᾱ_k L₀_k − α_k L₀_k†).
    /// Returns the generator over {L₀_k} plus the per-operator split records
    /// (empty when everything was already traceless).
    pub fn with_trace_split(
        h: HermitianMatrix,
        ops: Vec<CMat>,
    ) -> Result<(Self, Vec<TraceSplit>), LindbladError> {
        let d = h.dim();
        let mut h_total = h.matrix().clone();
        let mut splits = Vec::new();
        let mut traceless_ops = Vec::with_capacity(ops.len());
        for (index, l) in ops.into_iter().enumerate() {
            if l.nrows() != d || l.ncols() != d {
                return Err(LindbladError::DimensionMismatch(format!(
                    "operator {index} is {}x{}, expected {d}x{d}",
                    l.nrows(),
                    l.ncols()
                )));
            }
            let alpha = l.trace() / C64::new(d as f64, 0.0);
            if alpha.norm() * (d as f64).sqrt() > L_TRACE_TOL {
                let l0 = &l - eye(d) * alpha;
                let correction =
                    (&l0 * alpha.conj() - l0.adjoint() * alpha) * C64::new(0.0, 0.5);
                h_total += correction;
                splits.push(TraceSplit { index, alpha });
                traceless_ops.push(l0);
            } else {
                traceless_ops.push(l);
            }
        }
        let gen = Self::new(HermitianMatrix::new(h_total)?, traceless_ops)?;
        Ok((gen, splits))
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn hamiltonian(&self) -> &HermitianMatrix {
        &self.h
    }

    pub fn ops(&self) -> &[CMat] {
        &self.ops
    }
}

/// Right-hand side of the coefficient-form master equation applied to an
/// arbitrary operator:
/// −i[H, X] + Σ_ij a_ij (F_i X F_j† − ½{F_j†F_i, X}).
pub fn gks_rhs(g: &GKSGenerator, x: &CMat) -> CMat {
    let h = g.h.matrix();
    let mut out = (h * x - x * h) * C64::new(0.0, -1.0);
    let n = g.basis.len();
    let a = g.a.matrix();
    for i in 0..n {
        let fi = &g.basis.elements()[i];
        for j in 0..n {
            let aij = a[(i, j)];
            if aij.norm() == 0.0 {
                continue;
            }
            let fj = &g.basis.elements()[j];
            let fjdfi = fj.adjoint() * fi;
            let term = fi * x * fj.adjoint() - (&fjdfi * x + x * &fjdfi) * C64::new(0.5, 0.0);
            out += term * aij;
        }
    }
    out
}

/// Right-hand side of the operator-form master equation applied to an
/// arbitrary operator: −i[H, X] + Σ_k (L_k X L_k† − ½{L_k†L_k, X}).
pub fn canonical_rhs(g: &CanonicalGenerator, x: &CMat) -> CMat {
    let h = g.h.matrix();
    let mut out = (h * x - x * h) * C64::new(0.0, -1.0);
    for l in &g.ops {
        let ldl = l.adjoint() * l;
        out += l * x * l.adjoint() - (&ldl * x + x * &ldl) * C64::new(0.5, 0.0);
    }
    out
}

/// Diagonalize the coefficient matrix: A = V M V† gives
/// L_k = √μ_k Σ_i v_ik F_i for eigenpairs (μ_k, v_k), largest μ first.
/// Eigenvalues ≤ [`CANON_RELCUT`]·μ_max are dropped; eigenvalues below
/// −[`CANON_NEG_TOL`] are rejected (the construction gate makes this
/// unreachable for validated generators; it guards direct callers).
pub fn canonicalize(g: &GKSGenerator) -> Result<CanonicalGenerator, LindbladError> {
    let es = g.a.eig()?;
    let n = es.values.len();
    let mu_max = es.values.iter().fold(0.0_f64, |m, &v| m.max(v));
    let mut ops = Vec::new();
    for k in (0..n).rev() {
        let mu = es.values[k];
        if mu < -CANON_NEG_TOL {
            return Err(LindbladError::CoefficientNotPositive { min_eig: mu, tol: CANON_NEG_TOL });
        }
        if mu <= CANON_RELCUT * mu_max || mu <= 0.0 {
            continue;
        }
        let d = g.dim();
        let mut l = CMat::zeros(d, d);
        for i in 0..n {
            let v = es.vectors[(i, k)];
            if v.norm() > 0.0 {
                l += &g.basis.elements()[i] * v;
            }
        }
        ops.push(l * C64::new(mu.sqrt(), 0.0));
    }
    CanonicalGenerator::new(g.h.clone(), ops)
}

/// Embed a single traceless operator into coefficient form over a basis:
/// c_i = tr(F_i† L), A = c c†. The expansion must reproduce L
/// (‖Σ c_i F_i − L‖ ≤ 1e-10·‖L‖), which always holds for a full basis.
pub fn gks_from_lindblad_op(l: &CMat, basis: &OperatorBasis) -> Result<GKSGenerator, LindbladError> {
    let d = basis.dim();
    if l.nrows() != d || l.ncols() != d {
        return Err(LindbladError::DimensionMismatch(format!(
            "operator is {}x{}, expected {d}x{d}",
            l.nrows(),
            l.ncols()
        )));
    }
    let trace_abs = l.trace().norm();
    if trace_abs > L_TRACE_TOL {
        return Err(LindbladError::OperatorNotTraceless { index: 0, trace_abs });
    }
    let c = basis.coefficients(l);
    let mut recon = CMat::zeros(d, d);
    for (ci, f) in c.iter().zip(basis.elements()) {
        recon += f * *ci;
    }
    let residual = (&recon - l).norm();
    if residual > 1e-10 * l.norm().max(1e-300) {
        return Err(LindbladError::BasisMismatch { residual });
    }
    let n = basis.len();
    let a = CMat::from_fn(n, n, |i, j| c[i] * c[j].conj());
    GKSGenerator::new(
        HermitianMatrix::new(CMat::zeros(d, d))?,
        basis.clone(),
        HermitianMatrix::new(a)?,
    )
}

/// A validated superoperator in column-stacking convention.
///
/// Generator superoperators are Hermiticity-preserving and annihilate the
/// trace functional; both are structural properties checked at construction.
#[derive(Debug, Clone)]
pub struct Superoperator {
    d: usize,
    m: CMat,
}

impl Superoperator {
    pub fn new(d: usize, m: CMat) -> Result<Self, LindbladError> {
        if m.nrows() != d * d || m.ncols() != d * d {
            return Err(LindbladError::DimensionMismatch(format!(
                "superoperator is {}x{}, expected {}x{}",
                m.nrows(),
                m.ncols(),
                d * d,
                d * d
            )));
        }
        if !is_finite_mat(&m) {
            return Err(LindbladError::NonFinite);
        }
        let scale = 1.0 + m.norm();
        let herm_defect = hermiticity_defect(d, &m);
        if herm_defect > SUPEROP_HERM_TOL * scale {
            return Err(LindbladError::NotHermiticityPreserving { defect: herm_defect });
        }
        let trace_defect = (vec_col(&eye(d)).adjoint() * &m).norm();
        if trace_defect > SUPEROP_TRACE_TOL * scale {
            return Err(LindbladError::TraceLeak { defect: trace_defect });
        }
        Ok(Self { d, m })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    /// Apply to an operator: unvec(S · vec(X)).
    pub fn act(&self, x: &CMat) -> CMat {
        unvec_col(self.d, &(&self.m * vec_col(x)))
    }
}

/// ‖S − K S̄ K‖ where K is the transpose swap on vectorized indices; zero
/// exactly when the map sends Hermitian inputs to Hermitian outputs.
fn hermiticity_defect(d: usize, m: &CMat) -> f64 {
    let swap = |idx: usize| (idx % d) * d + idx / d;
    let mut defect_sq = 0.0;
    for a in 0..d * d {
        for b in 0..d * d {
            let diff = m[(a, b)] - m[(swap(a), swap(b))].conj();
            defect_sq += diff.norm_sqr();
        }
    }
    defect_sq.sqrt()
}

/// Column-stacking Liouvillian of a canonical generator:
/// S = −i(I⊗H − Hᵀ⊗I) + Σ_k [L̄_k⊗L_k − ½ I⊗(L_k†L_k) − ½ (L_k†L_k)ᵀ⊗I].
pub fn liouvillian(g: &CanonicalGenerator) -> Result<Superoperator, LindbladError> {
    let d = g.dim();
    let h = g.hamiltonian().matrix();
    let id = eye(d);
    let mut s = (kron(&id, h) - kron(&h.transpose(), &id)) * C64::new(0.0, -1.0);
    for l in g.ops() {
        let ldl = l.adjoint() * l;
        s += kron(&l.conjugate(), l)
            - (kron(&id, &ldl) + kron(&ldl.transpose(), &id)) * C64::new(0.5, 0.0);
    }
    Superoperator::new(d, s)
}

/// Exact propagation ρ(t) = exp(t·𝓛)(ρ) for t ≥ 0.
pub fn propagate(
    g: &CanonicalGenerator,
    rho: &DensityMatrix,
    t: f64,
) -> Result<DensityMatrix, LindbladError> {
    if !(t >= 0.0) {
        return Err(LindbladError::NegativeTime { t });
    }
    if rho.dim() != g.dim() {
        return Err(LindbladError::DimensionMismatch(format!(
            "state dim {} vs generator dim {}",
            rho.dim(),
            g.dim()
        )));
    }
    let s = liouvillian(g)?;
    let et = linalg::expm(&(s.matrix() * C64::new(t, 0.0)))?;
    let out = unvec_col(g.dim(), &(&et * vec_col(rho.matrix())));
    Ok(DensityMatrix::from_map_output(out)?)
}

/// ‖exp((t+s)𝓛) − exp(t𝓛)·exp(s𝓛)‖ for t, s ≥ 0.
pub fn semigroup_defect(g: &CanonicalGenerator, t: f64, s: f64) -> Result<f64, LindbladError> {
    if !(t >= 0.0) {
        return Err(LindbladError::NegativeTime { t });
    }
    if !(s >= 0.0) {
        return Err(LindbladError::NegativeTime { t: s });
    }
    let sup = liouvillian(g)?;
    let m = sup.matrix();
    let whole = linalg::expm(&(m * C64::new(t + s, 0.0)))?;
    let split = linalg::expm(&(m * C64::new(t, 0.0)))? * linalg::expm(&(m * C64::new(s, 0.0)))?;
    Ok((whole - split).norm())
}
