//! The one nontrivial control resource: a tunable coupling of the system to
//! a two-level apparatus, read out projectively in the apparatus basis.
//!
//! The coupling generator is X ⊗ σx with X = |0⟩⟨0| on the system. Over a
//! window s = γt the joint propagator is exactly
//! U = cos(sX) ⊗ I − i·sin(sX) ⊗ σx, so with the apparatus prepared in
//! |0⟩⟨0| the induced system pair is (B₀, B₁) = (cos(sX), sin(sX)):
//! a Yes-No measurement whose sharpness is set by s.
//!
//! Conjugating the coupling window by a schedule of unitary frames averages
//! X into an arbitrary PSD unit-trace X̄ ([`compile_schedule`] /
//! [`AveragingSchedule`]), which is what the synthesis layer exploits. The
//! interleaved realization [`joint_evolve_averaged`] converges to the ideal
//! coupling at rate O(1/reps).

use thiserror::Error;

use crate::channel::{ChannelError, DensityMatrix, MeasurementOutcome, PROB_FLOOR};
use crate::lindblad::{CanonicalGenerator, LindbladError};
use crate::linalg::{
    self, eye, kron, unitarity_defect, C64, CMat, CVec, HermitianMatrix, LinalgError,
};

/// Largest phase λmax(γt·X̄) accepted for a coupling window, with a small
/// roundoff allowance. Within this window cos(γt·X̄) and sin(γt·X̄) are both
/// PSD and the window is recoverable from the pair.
pub const PHASE_LIMIT: f64 = std::f64::consts::FRAC_PI_2;
/// Roundoff allowance on the phase limit.
pub const PHASE_SLACK: f64 = 1e-9;
/// Unit-trace tolerance for averaged coupling operators.
pub const XBAR_TRACE_TOL: f64 = 1e-10;
/// PSD floor for averaged coupling operators.
pub const XBAR_EIG_TOL: f64 = 1e-10;
/// Unitarity tolerance for schedule frames.
pub const FRAME_TOL: f64 = 1e-10;
/// Relative eigenvalue cutoff below which a schedule segment is dropped.
pub const SCHEDULE_RELCUT: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PrimitiveError {
    #[error("coupling phase {phase:.6} outside [0, {limit:.6}]")]
    CouplingOutOfRange { phase: f64, limit: f64 },
    #[error("coupling operator trace {trace:.12} is not 1")]
    NotUnitTrace { trace: f64 },
    #[error("coupling operator eigenvalue {min_eig:.3e} below floor")]
    NotPositive { min_eig: f64 },
    #[error("schedule has no segments")]
    EmptySchedule,
    #[error("schedule frame {index} is not unitary (defect {defect:.3e})")]
    FrameNotUnitary { index: usize, defect: f64 },
    #[error("segment duration {value} must be finite and non-negative")]
    BadDuration { value: f64 },
    #[error("total schedule duration {total} must be positive")]
    ZeroTotalDuration { total: f64 },
    #[error("step duration {value} must be positive")]
    NonPositiveDuration { value: f64 },
    #[error("repetition count must be at least 1")]
    ZeroReps,
    #[error("joint dimension {dim} is not 2·d")]
    OddJointDimension { dim: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Lindblad(#[from] LindbladError),
}

fn sigma_x() -> CMat {
    CMat::from_row_slice(2, 2, &[
        C64::new(0.0, 0.0),
        C64::new(1.0, 0.0),
        C64::new(1.0, 0.0),
        C64::new(0.0, 0.0),
    ])
}

fn ancilla_ground() -> CMat {
    let mut m = CMat::zeros(2, 2);
    m[(0, 0)] = C64::new(1.0, 0.0);
    m
}

/// The Yes-No resource on a d-dimensional system: coupling operator
/// X = |0⟩⟨0| applied for a window γt ∈ [0, π/2].
#[derive(Debug, Clone)]
pub struct YesNoPrimitive {
    d: usize,
    gamma_t: f64,
}

impl YesNoPrimitive {
    pub fn new(d: usize, gamma_t: f64) -> Result<Self, PrimitiveError> {
        if d == 0 {
            return Err(PrimitiveError::DimensionMismatch("dimension 0".into()));
        }
        if !gamma_t.is_finite() || !(0.0..=PHASE_LIMIT + PHASE_SLACK).contains(&gamma_t) {
            return Err(PrimitiveError::CouplingOutOfRange { phase: gamma_t, limit: PHASE_LIMIT });
        }
        Ok(Self { d, gamma_t })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn gamma_t(&self) -> f64 {
        self.gamma_t
    }

    /// The bare coupling operator X = |0⟩⟨0|.
    pub fn base_operator(&self) -> HermitianMatrix {
        let mut m = CMat::zeros(self.d, self.d);
        m[(0, 0)] = C64::new(1.0, 0.0);
        HermitianMatrix::new(m).expect("projector is Hermitian")
    }
}

/// The system-side operator pair induced by a coupling window:
/// B₀ = cos(γt·X̄), B₁ = sin(γt·X̄), with B₀² + B₁² = I.
#[derive(Debug, Clone)]
pub struct EffectivePair {
    pub b0: HermitianMatrix,
    pub b1: HermitianMatrix,
}

fn validate_xbar(xbar: &HermitianMatrix) -> Result<f64, PrimitiveError> {
    let tr = xbar.trace_re();
    if (tr - 1.0).abs() > XBAR_TRACE_TOL {
        return Err(PrimitiveError::NotUnitTrace { trace: tr });
    }
    let es = xbar.eig()?;
    let min_eig = es.values[0];
    if min_eig < -XBAR_EIG_TOL {
        return Err(PrimitiveError::NotPositive { min_eig });
    }
    Ok(*es.values.last().expect("non-empty spectrum"))
}

/// Build the pair for an averaged coupling operator X̄ (PSD, unit trace).
///
/// The admissible window is spectral: λmax(γt·X̄) ≤ π/2. For the bare rank-one
/// X this coincides with γt ≤ π/2, but averaged operators spread the phase
/// across their spectrum, so γt itself may exceed π/2.
pub fn effective_pair(gamma_t: f64, xbar: &HermitianMatrix) -> Result<EffectivePair, PrimitiveError> {
    if !gamma_t.is_finite() || gamma_t < 0.0 {
        return Err(PrimitiveError::CouplingOutOfRange { phase: gamma_t, limit: PHASE_LIMIT });
    }
    let lmax = validate_xbar(xbar)?;
    let phase = gamma_t * lmax.max(0.0);
    if phase > PHASE_LIMIT + PHASE_SLACK {
        return Err(PrimitiveError::CouplingOutOfRange { phase, limit: PHASE_LIMIT });
    }
    let b0 = xbar.apply_fn(|l| (gamma_t * l).cos())?;
    let b1 = xbar.apply_fn(|l| (gamma_t * l).sin())?;
    Ok(EffectivePair { b0, b1 })
}

/// Joint propagator U = cos(s·X̄) ⊗ I − i·sin(s·X̄) ⊗ σx of the coupling
/// generator X̄ ⊗ σx over window s.
fn coupling_unitary(s: f64, xbar: &HermitianMatrix) -> Result<CMat, PrimitiveError> {
    let c = xbar.apply_fn(|l| (s * l).cos())?;
    let snm = xbar.apply_fn(|l| (s * l).sin())?;
    Ok(kron(c.matrix(), &eye(2)) + kron(snm.matrix(), &sigma_x()) * C64::new(0.0, -1.0))
}

/// Exact joint state U(ρ ⊗ |0⟩⟨0|)U† for the bare coupling of a primitive.
pub fn joint_evolve(p: &YesNoPrimitive, rho: &DensityMatrix) -> Result<DensityMatrix, PrimitiveError> {
    joint_evolve_ideal(p.gamma_t, &p.base_operator(), rho)
}

/// Exact joint state for an arbitrary averaged coupling operator.
pub fn joint_evolve_ideal(
    gamma_t: f64,
    xbar: &HermitianMatrix,
    rho: &DensityMatrix,
) -> Result<DensityMatrix, PrimitiveError> {
    if rho.dim() != xbar.dim() {
        return Err(PrimitiveError::DimensionMismatch(format!(
            "state dim {} vs coupling dim {}",
            rho.dim(),
            xbar.dim()
        )));
    }
    // window validity (same spectral rule as effective_pair)
    effective_pair(gamma_t, xbar)?;
    let u = coupling_unitary(gamma_t, xbar)?;
    let joint = kron(rho.matrix(), &ancilla_ground());
    let out = &u * joint * u.adjoint();
    Ok(DensityMatrix::from_map_output(out)?)
}

/// Second-order expansion of the joint step in the window s = γt:
/// σ − is[A, σ] − (s²/2)[A, [A, σ]] with A = X̄ ⊗ σx and σ = ρ ⊗ |0⟩⟨0|.
/// The exact joint state deviates from this at third order in s.
pub fn second_order_joint(gamma_t: f64, xbar: &HermitianMatrix, rho: &DensityMatrix) -> CMat {
    let a = kron(xbar.matrix(), &sigma_x());
    let sigma = kron(rho.matrix(), &ancilla_ground());
    let c1 = &a * &sigma - &sigma * &a;
    let c2 = &a * &c1 - &c1 * &a;
    sigma + c1 * C64::new(0.0, -gamma_t) - c2 * C64::new(gamma_t * gamma_t / 2.0, 0.0)
}

/// Projective readout of the apparatus in its computational basis.
/// Outcome a has probability Σ_s ⟨s,a|σ|s,a⟩ and post state the normalized
/// system block; outcomes below the probability floor carry no post state.
pub fn readout(joint: &DensityMatrix) -> Result<Vec<MeasurementOutcome>, PrimitiveError> {
    let dim = joint.dim();
    if !dim.is_multiple_of(2) || dim == 0 {
        return Err(PrimitiveError::OddJointDimension { dim });
    }
    let d = dim / 2;
    let m = joint.matrix();
    let mut outcomes = Vec::with_capacity(2);
    for a in 0..2usize {
        let mut block = CMat::zeros(d, d);
        for s in 0..d {
            for s2 in 0..d {
                block[(s, s2)] = m[(s * 2 + a, s2 * 2 + a)];
            }
        }
        let p = block.trace().re;
        let post_state = if p > PROB_FLOOR {
            Some(DensityMatrix::from_map_output(block * C64::new(1.0 / p, 0.0))?)
        } else {
            None
        };
        outcomes.push(MeasurementOutcome { outcome: a, probability: p.max(0.0), post_state });
    }
    Ok(outcomes)
}

/// One segment of an averaging schedule: a unitary frame applied for a
/// duration. During the segment the bare coupling X is conjugated to V†XV.
#[derive(Debug, Clone)]
pub struct ScheduleSegment {
    pub frame: CMat,
    pub duration: f64,
}

/// A time-weighted list of frames realizing
/// X̄ = Σ_i (Δ_i / Σ_j Δ_j) · V_i† X V_i from the bare X = |0⟩⟨0|.
#[derive(Debug, Clone)]
pub struct AveragingSchedule {
    segments: Vec<ScheduleSegment>,
    total: f64,
    d: usize,
}

impl AveragingSchedule {
    pub fn new(segments: Vec<ScheduleSegment>) -> Result<Self, PrimitiveError> {
        if segments.is_empty() {
            return Err(PrimitiveError::EmptySchedule);
        }
        let d = segments[0].frame.nrows();
        let mut total = 0.0;
        for (index, seg) in segments.iter().enumerate() {
            if seg.frame.nrows() != d || seg.frame.ncols() != d {
                return Err(PrimitiveError::DimensionMismatch(format!(
                    "frame {index} is {}x{}, expected {d}x{d}",
                    seg.frame.nrows(),
                    seg.frame.ncols()
                )));
            }
            let defect = unitarity_defect(&seg.frame);
            if !(defect <= FRAME_TOL) {
                return Err(PrimitiveError::FrameNotUnitary { index, defect });
            }
            if !seg.duration.is_finite() || seg.duration < 0.0 {
                return Err(PrimitiveError::BadDuration { value: seg.duration });
            }
            total += seg.duration;
        }
        if !(total > 0.0) {
            return Err(PrimitiveError::ZeroTotalDuration { total });
        }
        Ok(Self { segments, total, d })
    }

    /// Trivial schedule: identity frame, unit duration (realizes the bare X).
    pub fn identity(d: usize) -> Result<Self, PrimitiveError> {
        Self::new(vec![ScheduleSegment { frame: eye(d), duration: 1.0 }])
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn segments(&self) -> &[ScheduleSegment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.total
    }

    /// The averaged operator Σ_i (Δ_i/T)·V_i†XV_i (PSD with unit trace).
    pub fn realized_operator(&self) -> HermitianMatrix {
        let mut out = CMat::zeros(self.d, self.d);
        for seg in &self.segments {
            // V†XV = (V†e₀)(V†e₀)† for X = |0⟩⟨0|
            let col: CVec = seg.frame.adjoint().column(0).into_owned();
            out += (&col * col.adjoint()) * C64::new(seg.duration / self.total, 0.0);
        }
        HermitianMatrix::wrap_symmetrized(out)
    }
}

/// Compile a PSD unit-trace target X̄ into an averaging schedule of total
/// duration delta_t: eigenvalue λ_i contributes a segment of duration
/// λ_i·delta_t whose frame rotates |0⟩ onto the eigenvector. Eigenvalues at
/// or below [`SCHEDULE_RELCUT`]·λmax are dropped.
pub fn compile_schedule(
    target: &HermitianMatrix,
    delta_t: f64,
) -> Result<AveragingSchedule, PrimitiveError> {
    if !(delta_t > 0.0) || !delta_t.is_finite() {
        return Err(PrimitiveError::NonPositiveDuration { value: delta_t });
    }
    validate_xbar(target)?;
    let es = target.eig()?;
    let lmax = es.values.last().copied().unwrap_or(0.0);
    let mut segments = Vec::new();
    for k in (0..es.values.len()).rev() {
        let lam = es.values[k];
        if lam <= SCHEDULE_RELCUT * lmax {
            continue;
        }
        let v = es.vectors.column(k).into_owned();
        let w = linalg::unitary_with_first_column(&v)?;
        segments.push(ScheduleSegment { frame: w.adjoint(), duration: lam * delta_t });
    }
    AveragingSchedule::new(segments)
}

/// Physical interleaved realization of an averaged coupling: `reps` sweeps,
/// each applying every segment's conjugated coupling for a 1/reps share of
/// its window. Converges to [`joint_evolve_ideal`] of the realized operator
/// at rate O(1/reps); when all conjugated couplings commute (as for
/// [`compile_schedule`] outputs) a single sweep is already exact.
///
/// The window is validated spectrally against the realized operator, the
/// same rule as [`effective_pair`].
pub fn joint_evolve_averaged(
    gamma_t: f64,
    schedule: &AveragingSchedule,
    reps: usize,
    rho: &DensityMatrix,
) -> Result<DensityMatrix, PrimitiveError> {
    if reps == 0 {
        return Err(PrimitiveError::ZeroReps);
    }
    let d = schedule.dim();
    if rho.dim() != d {
        return Err(PrimitiveError::DimensionMismatch(format!(
            "schedule dim {d}, state dim {}",
            rho.dim()
        )));
    }
    effective_pair(gamma_t, &schedule.realized_operator())?;
    let mut x = CMat::zeros(d, d);
    x[(0, 0)] = C64::new(1.0, 0.0);
    let mut sweep = eye(2 * d);
    for seg in schedule.segments() {
        let share = gamma_t * seg.duration / schedule.total_duration() / reps as f64;
        let xi = HermitianMatrix::new(seg.frame.adjoint() * &x * &seg.frame)?;
        let u = coupling_unitary(share, &xi)?;
        sweep = u * sweep; // segments act in list order
    }
    let total = linalg::mat_power(&sweep, reps as u64);
    let joint = kron(rho.matrix(), &ancilla_ground());
    let out = &total * joint * total.adjoint();
    Ok(DensityMatrix::from_map_output(out)?)
}

/// The Markovian generator approximated by repeating a feedback-corrected
/// step of duration t_step: L = (γt/√t_step)·U·X̄ (U is the outcome-1
/// feedback unitary, identity if absent). The identity component of L, if
/// any, is folded into an exact Hamiltonian correction; the returned
/// generator always satisfies the traceless-operator invariant.
pub fn small_time_generator(
    p: &YesNoPrimitive,
    xbar: &HermitianMatrix,
    feedback: Option<&CMat>,
    t_step: f64,
) -> Result<CanonicalGenerator, PrimitiveError> {
    if !(t_step > 0.0) || !t_step.is_finite() {
        return Err(PrimitiveError::NonPositiveDuration { value: t_step });
    }
    if xbar.dim() != p.dim() {
        return Err(PrimitiveError::DimensionMismatch(format!(
            "coupling dim {} vs primitive dim {}",
            xbar.dim(),
            p.dim()
        )));
    }
    validate_xbar(xbar)?;
    if let Some(u) = feedback {
        if u.nrows() != p.dim() || u.ncols() != p.dim() {
            return Err(PrimitiveError::DimensionMismatch(format!(
                "feedback is {}x{}, expected {}x{}",
                u.nrows(),
                u.ncols(),
                p.dim(),
                p.dim()
            )));
        }
        let defect = unitarity_defect(u);
        if !(defect <= FRAME_TOL) {
            return Err(PrimitiveError::FrameNotUnitary { index: 0, defect });
        }
    }
    let scale = C64::new(p.gamma_t() / t_step.sqrt(), 0.0);
    let l = match feedback {
        Some(u) => u * xbar.matrix() * scale,
        None => xbar.matrix() * scale,
    };
    let h = HermitianMatrix::new(CMat::zeros(p.dim(), p.dim()))?;
    let (gen, splits) = CanonicalGenerator::with_trace_split(h, vec![l])?;
    for s in &splits {
        log::warn!(
            "small-time operator {} carried an identity component (alpha = {:.3e}+{:.3e}i); folded into the Hamiltonian",
            s.index,
            s.alpha.re,
            s.alpha.im
        );
    }
    Ok(gen)
}
