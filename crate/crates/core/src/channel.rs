//! States and discrete-time evolutions: density matrices, Kraus channels,
//! Choi-matrix fingerprints, and generalized measurement.
//!
//! Conventions fixed here and relied on everywhere else:
//! - A channel is a list of Kraus operators {A_k} with Σ A_k†A_k = I.
//! - The Choi matrix uses the trace-one normalization
//!   C = (Λ ⊗ id)(|Ω⟩⟨Ω|) with |Ω⟩ = d^{-1/2} Σ_i |i⟩|i⟩, laid out so the
//!   channel factor is the first Kronecker slot.
//! - [`channel_distance`] is the Frobenius norm of the Choi difference.

use thiserror::Error;

use crate::linalg::{
    self, eye, is_finite_mat, kron, symmetrize, C64, CMat, CVec, HermitianMatrix, LinalgError,
};

/// Trace tolerance for user-constructed density matrices.
pub const DM_TRACE_TOL: f64 = 1e-10;
/// Eigenvalue floor for user-constructed density matrices.
pub const DM_EIG_TOL: f64 = 1e-10;
/// Looser gates for states produced by evolution routines.
pub const DM_PRODUCER_TOL: f64 = 1e-9;
/// Default Kraus completeness tolerance.
pub const COMPLETENESS_TOL: f64 = 1e-9;
/// Strict completeness tolerance for synthesis-grade targets.
pub const COMPLETENESS_STRICT_TOL: f64 = 1e-12;
/// Outcomes with probability at or below this floor carry no post state.
pub const PROB_FLOOR: f64 = 1e-12;
/// Choi matrices may dip this far below PSD before being rejected.
pub const CHOI_EIG_TOL: f64 = 1e-9;
/// Choi trace must be 1 within this bound.
pub const CHOI_TRACE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("empty Kraus operator list")]
    EmptyKraus,
    #[error("Kraus operator {index} is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    OperatorShape { index: usize, rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },
    #[error("non-finite entries")]
    NonFinite,
    #[error("completeness defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    Completeness { defect: f64, tol: f64 },
    #[error("trace {trace:.12} deviates from 1 beyond tolerance {tol:.3e}")]
    Trace { trace: f64, tol: f64 },
    #[error("minimum eigenvalue {min_eig:.3e} below floor -{tol:.3e}")]
    NotPositive { min_eig: f64, tol: f64 },
    #[error("probability {p:.3e} at or below floor {floor:.3e} has no post state")]
    ZeroProbability { p: f64, floor: f64 },
    #[error("matrix is not square")]
    NotSquare,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("zero vector cannot be normalized to a state")]
    ZeroVector,
    #[error("parameter {name} = {value} outside [{lo}, {hi}]")]
    ParameterRange { name: &'static str, value: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A trace-one positive-semidefinite Hermitian state.
///
/// Both constructors symmetrize, validate trace and positivity, then rescale
/// the trace to exactly one, so stored states never accumulate trace drift.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    h: HermitianMatrix,
}

impl DensityMatrix {
    /// Strict constructor for user-supplied states: |tr−1| ≤ 1e-10 and
    /// spectrum ≥ −1e-10.
    pub fn new(m: CMat) -> Result<Self, ChannelError> {
        Self::gated(m, DM_TRACE_TOL, DM_EIG_TOL)
    }

    /// Producer constructor for states coming out of evolution routines:
    /// same checks at the looser 1e-9 gates.
    pub fn from_map_output(m: CMat) -> Result<Self, ChannelError> {
        Self::gated(m, DM_PRODUCER_TOL, DM_PRODUCER_TOL)
    }

    fn gated(m: CMat, trace_tol: f64, eig_tol: f64) -> Result<Self, ChannelError> {
        let h = HermitianMatrix::new(m)?;
        let tr = h.trace_re();
        if (tr - 1.0).abs() > trace_tol {
            return Err(ChannelError::Trace { trace: tr, tol: trace_tol });
        }
        let min_eig = h.eig()?.values[0];
        if min_eig < -eig_tol {
            return Err(ChannelError::NotPositive { min_eig, tol: eig_tol });
        }
        let normalized = h.matrix() * C64::new(1.0 / tr, 0.0);
        Ok(Self { h: HermitianMatrix::wrap_symmetrized(normalized) })
    }

    /// Pure state |v⟩⟨v| from a (not necessarily normalized) ket.
    pub fn pure(ket: &CVec) -> Result<Self, ChannelError> {
        let n = ket.norm();
        if n < 1e-150 {
            return Err(ChannelError::ZeroVector);
        }
        let v = ket * C64::new(1.0 / n, 0.0);
        Self::new(&v * v.adjoint())
    }

    /// Computational basis state |i⟩⟨i| in dimension d.
    pub fn basis_state(d: usize, i: usize) -> Result<Self, ChannelError> {
        if i >= d {
            return Err(ChannelError::DimensionMismatch(format!("basis index {i} >= dim {d}")));
        }
        let mut ket = CVec::zeros(d);
        ket[i] = C64::new(1.0, 0.0);
        Self::pure(&ket)
    }

    /// Maximally mixed state I/d.
    pub fn maximally_mixed(d: usize) -> Self {
        let m = eye(d) * C64::new(1.0 / d as f64, 0.0);
        Self { h: HermitianMatrix::wrap_symmetrized(m) }
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn matrix(&self) -> &CMat {
        self.h.matrix()
    }

    pub fn as_hermitian(&self) -> &HermitianMatrix {
        &self.h
    }

    /// tr(ρ²) ∈ [1/d, 1].
    pub fn purity(&self) -> f64 {
        (self.h.matrix() * self.h.matrix()).trace().re
    }
}

/// ‖Σ A_k†A_k − I‖ in Frobenius norm (infinite for shape mismatches).
pub fn completeness_defect(ops: &[CMat]) -> f64 {
    if ops.is_empty() {
        return f64::INFINITY;
    }
    let d_in = ops[0].ncols();
    let mut sum = CMat::zeros(d_in, d_in);
    for a in ops {
        if a.ncols() != d_in {
            return f64::INFINITY;
        }
        sum += a.adjoint() * a;
    }
    (sum - eye(d_in)).norm()
}

/// A completely positive trace-preserving map in Kraus form.
///
/// Operators may be rectangular (d_out × d_in); completeness
/// Σ A_k†A_k = I_{d_in} is enforced at construction within the tolerance the
/// channel was built with.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    ops: Vec<CMat>,
    tol: f64,
}

impl KrausChannel {
    pub fn new(ops: Vec<CMat>) -> Result<Self, ChannelError> {
        Self::with_tolerance(ops, COMPLETENESS_TOL)
    }

    /// Construct with an explicit completeness tolerance (e.g.
    /// [`COMPLETENESS_STRICT_TOL`] for synthesis targets).
    pub fn with_tolerance(ops: Vec<CMat>, tol: f64) -> Result<Self, ChannelError> {
        if ops.is_empty() {
            return Err(ChannelError::EmptyKraus);
        }
        let (r, c) = (ops[0].nrows(), ops[0].ncols());
        for (index, a) in ops.iter().enumerate() {
            if a.nrows() != r || a.ncols() != c {
                return Err(ChannelError::OperatorShape {
                    index,
                    rows: a.nrows(),
                    cols: a.ncols(),
                    expected_rows: r,
                    expected_cols: c,
                });
            }
            if !is_finite_mat(a) {
                return Err(ChannelError::NonFinite);
            }
        }
        let defect = completeness_defect(&ops);
        if defect > tol {
            return Err(ChannelError::Completeness { defect, tol });
        }
        Ok(Self { ops, tol })
    }

    pub fn ops(&self) -> &[CMat] {
        &self.ops
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn dim_in(&self) -> usize {
        self.ops[0].ncols()
    }

    pub fn dim_out(&self) -> usize {
        self.ops[0].nrows()
    }

    /// Identity channel on dimension d.
    pub fn identity(d: usize) -> Self {
        Self::new(vec![eye(d)]).expect("identity is complete")
    }

    /// Single-unitary channel ρ ↦ UρU†.
    pub fn from_unitary(u: CMat) -> Result<Self, ChannelError> {
        if !u.is_square() {
            return Err(ChannelError::NotSquare);
        }
        Self::new(vec![u])
    }

    /// Qubit bit flip: ρ ↦ (1−p)ρ + p·σx ρ σx.
    pub fn bit_flip(p: f64) -> Result<Self, ChannelError> {
        check_unit_interval("p", p)?;
        let i2 = eye(2) * C64::new((1.0 - p).sqrt(), 0.0);
        let sx = CMat::from_row_slice(2, 2, &[
            C64::new(0.0, 0.0),
            C64::new(p.sqrt(), 0.0),
            C64::new(p.sqrt(), 0.0),
            C64::new(0.0, 0.0),
        ]);
        Self::new(vec![i2, sx])
    }

    /// Qubit amplitude damping with decay probability p.
    pub fn amplitude_damping(p: f64) -> Result<Self, ChannelError> {
        check_unit_interval("p", p)?;
        let a0 = CMat::from_row_slice(2, 2, &[
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new((1.0 - p).sqrt(), 0.0),
        ]);
        let a1 = CMat::from_row_slice(2, 2, &[
            C64::new(0.0, 0.0),
            C64::new(p.sqrt(), 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
        ]);
        Self::new(vec![a0, a1])
    }

    /// Depolarizing channel on dimension d: ρ ↦ (1−p)ρ + p·tr(ρ)·I/d.
    pub fn depolarizing(d: usize, p: f64) -> Result<Self, ChannelError> {
        check_unit_interval("p", p)?;
        if d == 0 {
            return Err(ChannelError::DimensionMismatch("dimension 0".into()));
        }
        let mut ops = vec![eye(d) * C64::new((1.0 - p).sqrt(), 0.0)];
        let w = C64::new((p / d as f64).sqrt(), 0.0);
        for i in 0..d {
            for j in 0..d {
                let mut e = CMat::zeros(d, d);
                e[(i, j)] = w;
                ops.push(e);
            }
        }
        Self::new(ops)
    }

    /// Apply the channel: ρ ↦ Σ A_k ρ A_k†.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix, ChannelError> {
        if rho.dim() != self.dim_in() {
            return Err(ChannelError::DimensionMismatch(format!(
                "state dim {} vs channel input dim {}",
                rho.dim(),
                self.dim_in()
            )));
        }
        let mut out = CMat::zeros(self.dim_out(), self.dim_out());
        for a in &self.ops {
            out += a * rho.matrix() * a.adjoint();
        }
        DensityMatrix::from_map_output(out)
    }

    /// Composition outer ∘ inner (inner acts first). The operator list is the
    /// ordered product set; completeness carries over within the combined
    /// tolerance of the two factors.
    pub fn compose(outer: &KrausChannel, inner: &KrausChannel) -> Result<KrausChannel, ChannelError> {
        if inner.dim_out() != outer.dim_in() {
            return Err(ChannelError::DimensionMismatch(format!(
                "inner output dim {} vs outer input dim {}",
                inner.dim_out(),
                outer.dim_in()
            )));
        }
        let mut ops = Vec::with_capacity(outer.ops.len() * inner.ops.len());
        for b in &outer.ops {
            for a in &inner.ops {
                ops.push(b * a);
            }
        }
        KrausChannel::with_tolerance(ops, outer.tol + inner.tol)
    }

    /// Column-stacking transfer matrix S with S·vec(ρ) = vec(Λ(ρ)).
    pub fn transfer_matrix(&self) -> CMat {
        let (di, dof) = (self.dim_in(), self.dim_out());
        let mut s = CMat::zeros(dof * dof, di * di);
        for a in &self.ops {
            s += kron(&a.conjugate(), a);
        }
        s
    }
}

fn check_unit_interval(name: &'static str, p: f64) -> Result<(), ChannelError> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(ChannelError::ParameterRange { name, value: p, lo: 0.0, hi: 1.0 });
    }
    Ok(())
}

/// One outcome of a generalized measurement: label, probability, and the
/// normalized post-state when the probability clears [`PROB_FLOOR`].
#[derive(Debug, Clone)]
pub struct MeasurementOutcome {
    pub outcome: usize,
    pub probability: f64,
    pub post_state: Option<DensityMatrix>,
}

/// Generalized measurement with operators {M_k}: p_k = tr(M_k ρ M_k†),
/// post state M_k ρ M_k† / p_k. The operator set must be complete within
/// [`COMPLETENESS_TOL`], which makes the probabilities sum to 1 within 1e-9.
pub fn measure(ops: &[CMat], rho: &DensityMatrix) -> Result<Vec<MeasurementOutcome>, ChannelError> {
    let defect = completeness_defect(ops);
    if defect > COMPLETENESS_TOL {
        return Err(ChannelError::Completeness { defect, tol: COMPLETENESS_TOL });
    }
    let d = rho.dim();
    if ops[0].ncols() != d {
        return Err(ChannelError::DimensionMismatch(format!(
            "state dim {} vs measurement input dim {}",
            d,
            ops[0].ncols()
        )));
    }
    let mut outcomes = Vec::with_capacity(ops.len());
    for (k, m) in ops.iter().enumerate() {
        let updated = m * rho.matrix() * m.adjoint();
        let p = updated.trace().re;
        let post_state = if p > PROB_FLOOR {
            Some(DensityMatrix::from_map_output(updated * C64::new(1.0 / p, 0.0))?)
        } else {
            None
        };
        outcomes.push(MeasurementOutcome { outcome: k, probability: p.max(0.0), post_state });
    }
    Ok(outcomes)
}

/// Trace-one Choi matrix of a channel on equal input/output dimension d.
#[derive(Debug, Clone)]
pub struct ChoiMatrix {
    d: usize,
    h: HermitianMatrix,
}

impl ChoiMatrix {
    /// Validate a d²×d² matrix as a Choi matrix: Hermitian, spectrum
    /// ≥ −[`CHOI_EIG_TOL`], trace 1 within [`CHOI_TRACE_TOL`].
    pub fn new(d: usize, m: CMat) -> Result<Self, ChannelError> {
        if m.nrows() != d * d || m.ncols() != d * d {
            return Err(ChannelError::DimensionMismatch(format!(
                "Choi matrix is {}x{}, expected {}x{}",
                m.nrows(),
                m.ncols(),
                d * d,
                d * d
            )));
        }
        let h = HermitianMatrix::new(m)?;
        let tr = h.trace_re();
        if (tr - 1.0).abs() > CHOI_TRACE_TOL {
            return Err(ChannelError::Trace { trace: tr, tol: CHOI_TRACE_TOL });
        }
        let min_eig = h.eig()?.values[0];
        if min_eig < -CHOI_EIG_TOL {
            return Err(ChannelError::NotPositive { min_eig, tol: CHOI_EIG_TOL });
        }
        Ok(Self { d, h })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &CMat {
        self.h.matrix()
    }
}

/// Choi matrix of a square channel: C = (1/d) Σ_k w_k w_k† with
/// w_k the row-major flattening of A_k.
pub fn choi(ch: &KrausChannel) -> Result<ChoiMatrix, ChannelError> {
    let d = ch.dim_in();
    if ch.dim_out() != d {
        return Err(ChannelError::NotSquare);
    }
    let mut c = CMat::zeros(d * d, d * d);
    for a in ch.ops() {
        let w = linalg::vec_col(&a.transpose());
        c += &w * w.adjoint();
    }
    c *= C64::new(1.0 / d as f64, 0.0);
    ChoiMatrix::new(d, c)
}

/// Choi matrix recovered from a column-stacking transfer matrix on
/// dimension d (index reshuffle of S, divided by d).
pub fn choi_from_transfer(d: usize, s: &CMat) -> Result<ChoiMatrix, ChannelError> {
    if s.nrows() != d * d || s.ncols() != d * d {
        return Err(ChannelError::DimensionMismatch(format!(
            "transfer matrix is {}x{}, expected {}x{}",
            s.nrows(),
            s.ncols(),
            d * d,
            d * d
        )));
    }
    let mut c = CMat::zeros(d * d, d * d);
    let inv_d = C64::new(1.0 / d as f64, 0.0);
    for a in 0..d {
        for i in 0..d {
            for b in 0..d {
                for j in 0..d {
                    c[(a * d + i, b * d + j)] = s[(b * d + a, j * d + i)] * inv_d;
                }
            }
        }
    }
    ChoiMatrix::new(d, symmetrize(&c))
}

/// Trace distance ½‖ρ − σ‖₁ between two states of equal dimension.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    assert_eq!(a.dim(), b.dim(), "trace_distance needs equal dimensions");
    let diff = HermitianMatrix::wrap_symmetrized(a.matrix() - b.matrix());
    let es = diff.eig().expect("difference of states is Hermitian");
    0.5 * es.values.iter().map(|l| l.abs()).sum::<f64>()
}

/// Frobenius distance between the Choi matrices of two channels.
///
/// Panics if the channels are not both square on the same dimension; callers
/// that take untrusted input must check dimensions first.
pub fn channel_distance(a: &KrausChannel, b: &KrausChannel) -> f64 {
    assert_eq!(a.dim_in(), a.dim_out(), "channel_distance needs square channels");
    assert_eq!(b.dim_in(), b.dim_out(), "channel_distance needs square channels");
    assert_eq!(a.dim_in(), b.dim_in(), "channel_distance needs equal dimensions");
    let ca = choi(a).expect("valid channel has a valid Choi matrix");
    let cb = choi(b).expect("valid channel has a valid Choi matrix");
    (ca.matrix() - cb.matrix()).norm()
}
