//! Compilation of target evolutions into control programs.
//!
//! Every target — a Kraus family or a Markovian generator — is reduced to the
//! same resources: unitaries, the two-outcome coupling measurement, and
//! outcome-conditioned feedback. The constructions:
//!
//! - [`synth_two_outcome`]: a two-element family {A₀, A₁} becomes one
//!   measurement whose coupling operator is Θ = acos|A₀| followed by the
//!   polar unitaries of A₀ and A₁ as feedback. Exact up to floating point.
//! - [`synth_multi_outcome`]: a K-element family becomes a cascade — peel off
//!   A₀ with one measurement, divide the survivors by sin Θ on its support,
//!   recurse. Outcome records map 1:1 onto family elements.
//! - [`synth_lindblad`]: a generator becomes n repeated steps; each step runs
//!   the Hamiltonian gate and, per jump operator L = U·P, one weak
//!   measurement (window tr P·√(T/n)) with U fed back on outcome 1.
//!   Converges at O(1/n).
//! - [`commutator_step`]: four gates realizing exp(−i·(i[H₁,H₂])·dt²) up to
//!   O(dt³), the standard route to Hamiltonians outside the native set.
//! - [`verify`]: run the compiled program and report its distance to the
//!   target, falling back to the transfer-matrix route when the record tree
//!   is too large to enumerate.

use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

use crate::channel::{
    channel_distance, choi, choi_from_transfer, completeness_defect, ChannelError, KrausChannel,
    COMPLETENESS_STRICT_TOL,
};
use crate::lindblad::{CanonicalGenerator, LindbladError};
use crate::linalg::{
    acos_clamped, expm, eye, polar, C64, CMat, HermitianMatrix, LinalgError, PINV_RELCUT,
};
use crate::primitive::{compile_schedule, PrimitiveError};
use crate::program::{ControlProgram, Instruction, ProgramError, SynthesisReport};
use crate::sim::{self, SimError};

/// Below this total coupling phase a measurement is compiled as a plain
/// gate. The cut must sit well above √machine-eps ≈ 1.5e-8: singular values
/// of a numerically unitary factor land within ~2e-16 of 1 and acos turns
/// that into ~2e-8 of spurious phase. Dropping a window γt costs only
/// O(γt²) in Choi distance, so 1e-6 keeps the collapse error near 1e-12.
const COLLAPSE_FLOOR: f64 = 1e-6;

/// Contribution floor for skipping numerically zero Hamiltonians and jump
/// operators (no acos amplification involved).
const THETA_FLOOR: f64 = 1e-12;

/// Residual-family completeness defect above which the kernel closure is
/// applied in the cascade.
const CLOSURE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("expected a two-element Kraus family, got {got}")]
    NotTwoOutcome { got: usize },
    #[error("synthesis needs a square (system-to-system) family, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("completeness defect {defect:.3e} exceeds the synthesis gate {tol:.1e}")]
    Completeness { defect: f64, tol: f64 },
    #[error(
        "jump operator {index}: coupling window {gamma_t:.6} exceeds π/2; \
         increase the step count"
    )]
    CouplingOutOfRange { index: usize, gamma_t: f64 },
    #[error("evolution time must be positive and finite, got {t}")]
    BadTime { t: f64 },
    #[error("step count must be at least 1")]
    ZeroSteps,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Lindblad(#[from] LindbladError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn require_square(ch: &KrausChannel) -> Result<usize, SynthError> {
    if ch.dim_in() != ch.dim_out() {
        return Err(SynthError::NotSquare { rows: ch.dim_out(), cols: ch.dim_in() });
    }
    Ok(ch.dim_in())
}

fn require_strict_completeness(ch: &KrausChannel) -> Result<(), SynthError> {
    let defect = completeness_defect(ch.ops());
    if defect > COMPLETENESS_STRICT_TOL {
        return Err(SynthError::Completeness { defect, tol: COMPLETENESS_STRICT_TOL });
    }
    Ok(())
}

/// Measurement + feedback realizing the two-element family {a0, a1}:
/// a0 = U₀·cos Θ and a1 = U₁·sin Θ with Θ = acos|a0|, so the coupling window
/// is tr Θ and the normalized coupling operator is Θ/tr Θ. A vanishing Θ
/// means a0 is unitary and a1 ≈ 0; the program collapses to one gate.
fn two_outcome_instructions(
    d: usize,
    a0: &CMat,
    a1: &CMat,
) -> Result<Vec<Instruction>, SynthError> {
    let pf0 = polar(a0)?;
    let theta = pf0.positive.apply_fn(acos_clamped)?;
    let gamma_t = theta.trace_re();
    if gamma_t <= COLLAPSE_FLOOR {
        return Ok(vec![Instruction::Unitary(pf0.unitary)]);
    }
    let xbar = HermitianMatrix::new(theta.matrix() * C64::new(1.0 / gamma_t, 0.0))?;
    let schedule = compile_schedule(&xbar, 1.0)?;
    let u1 = polar(a1)?.unitary;
    let on0 = ControlProgram::new(d, vec![Instruction::Unitary(pf0.unitary)])?;
    let on1 = ControlProgram::new(d, vec![Instruction::Unitary(u1)])?;
    Ok(vec![
        Instruction::YesNoMeasure { gamma_t, schedule },
        Instruction::Branch { on0, on1 },
    ])
}

/// Compile a two-element Kraus family into one measurement with feedback.
pub fn synth_two_outcome(ch: &KrausChannel) -> Result<ControlProgram, SynthError> {
    let d = require_square(ch)?;
    if ch.ops().len() != 2 {
        return Err(SynthError::NotTwoOutcome { got: ch.ops().len() });
    }
    require_strict_completeness(ch)?;
    let instrs = two_outcome_instructions(d, &ch.ops()[0], &ch.ops()[1])?;
    Ok(ControlProgram::new(d, instrs)?)
}

/// One cascade stage: peel the first element off with a measurement, then
/// recurse on the survivors divided by sin Θ. The division is exact because
/// completeness confines every survivor to the support of sin Θ; when that
/// support is a proper subspace the residual family is completed on the
/// orthogonal kernel, which the outcome-1 state never occupies.
fn cascade_instructions(d: usize, ops: Vec<CMat>) -> Result<Vec<Instruction>, SynthError> {
    match ops.len() {
        0 => unreachable!("cascade on an empty family"),
        1 => Ok(vec![Instruction::Unitary(polar(&ops[0])?.unitary)]),
        2 => two_outcome_instructions(d, &ops[0], &ops[1]),
        _ => {
            let pf0 = polar(&ops[0])?;
            let theta = pf0.positive.apply_fn(acos_clamped)?;
            let gamma_t = theta.trace_re();
            if gamma_t <= COLLAPSE_FLOOR {
                log::warn!(
                    "cascade: leading element is unitary; {} outcomes are unreachable",
                    ops.len() - 1
                );
                return Ok(vec![Instruction::Unitary(pf0.unitary)]);
            }
            let xbar = HermitianMatrix::new(theta.matrix() * C64::new(1.0 / gamma_t, 0.0))?;
            let schedule = compile_schedule(&xbar, 1.0)?;
            let b1 = theta.apply_fn(f64::sin)?;
            let pinv = b1.pinv_on_support(PINV_RELCUT)?;
            let mut residual: Vec<CMat> =
                ops[1..].iter().map(|a| a * pinv.matrix()).collect();
            let defect = completeness_defect(&residual);
            if defect > CLOSURE_TOL {
                let p = b1.support_projector(PINV_RELCUT)?;
                let kernel = eye(d) - p.matrix();
                let u_res = polar(&residual[0])?.unitary;
                residual[0] += u_res * kernel;
                log::warn!(
                    "cascade: rank-deficient stage (defect {defect:.3e}); \
                     closing the residual family on the kernel"
                );
            }
            let sub = cascade_instructions(d, residual)?;
            let on0 = ControlProgram::new(d, vec![Instruction::Unitary(pf0.unitary)])?;
            let on1 = ControlProgram::new(d, sub)?;
            Ok(vec![
                Instruction::YesNoMeasure { gamma_t, schedule },
                Instruction::Branch { on0, on1 },
            ])
        }
    }
}

/// Compile any finite Kraus family into a cascade of measurements. Element k
/// is realized on the record 1…10 (k ones, then a zero), the last on all
/// ones; a two-element family reduces to [`synth_two_outcome`].
pub fn synth_multi_outcome(ch: &KrausChannel) -> Result<ControlProgram, SynthError> {
    let d = require_square(ch)?;
    require_strict_completeness(ch)?;
    let instrs = cascade_instructions(d, ch.ops().to_vec())?;
    Ok(ControlProgram::new(d, instrs)?)
}

/// Compile a Markovian generator into `steps` repeated stroboscopic steps
/// over total time `total_time`. Each step applies the Hamiltonian gate and,
/// for every jump operator L = U·P (polar), one measurement with window
/// tr P·√(T/n) and feedback U on outcome 1. The step window grows as √(T/n),
/// so a window past π/2 is repaired by raising `steps`; the compiled program
/// approaches exp(T·𝓛) at rate O(1/n).
pub fn synth_lindblad(
    g: &CanonicalGenerator,
    total_time: f64,
    steps: u64,
) -> Result<ControlProgram, SynthError> {
    if !(total_time > 0.0) || !total_time.is_finite() {
        return Err(SynthError::BadTime { t: total_time });
    }
    if steps == 0 {
        return Err(SynthError::ZeroSteps);
    }
    let d = g.dim();
    let tau = total_time / steps as f64;
    let mut body = Vec::new();
    let h = g.hamiltonian();
    if h.matrix().norm() > THETA_FLOOR {
        body.push(Instruction::Unitary(expm(&(h.matrix() * C64::new(0.0, -tau)))?));
    }
    for (index, l) in g.ops().iter().enumerate() {
        let pf = polar(l)?;
        let weight = pf.positive.trace_re();
        if weight <= THETA_FLOOR {
            continue;
        }
        let gamma_t = weight * tau.sqrt();
        if gamma_t > FRAC_PI_2 {
            return Err(SynthError::CouplingOutOfRange { index, gamma_t });
        }
        let xbar =
            HermitianMatrix::new(pf.positive.matrix() * C64::new(1.0 / weight, 0.0))?;
        let schedule = compile_schedule(&xbar, 1.0)?;
        let on1 = ControlProgram::new(d, vec![Instruction::Unitary(pf.unitary)])?;
        body.push(Instruction::YesNoMeasure { gamma_t, schedule });
        body.push(Instruction::Branch { on0: ControlProgram::empty(d)?, on1 });
    }
    if body.is_empty() {
        return Ok(ControlProgram::empty(d)?);
    }
    let body = ControlProgram::new(d, body)?;
    Ok(ControlProgram::new(d, vec![Instruction::Repeat { count: steps, body }])?)
}

/// Four gates realizing the group commutator
/// e^{iH₂dt}·e^{iH₁dt}·e^{−iH₂dt}·e^{−iH₁dt} = exp(−i·(i[H₁,H₂])·dt²) + O(dt³):
/// evolution under the effective Hamiltonian i[H₁, H₂] for time dt².
pub fn commutator_step(
    h1: &HermitianMatrix,
    h2: &HermitianMatrix,
    dt: f64,
) -> Result<ControlProgram, SynthError> {
    if h1.dim() != h2.dim() {
        return Err(SynthError::Dimension(format!(
            "h1 dim {} vs h2 dim {}",
            h1.dim(),
            h2.dim()
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SynthError::BadTime { t: dt });
    }
    let gate = |h: &HermitianMatrix, s: f64| -> Result<Instruction, SynthError> {
        Ok(Instruction::Unitary(expm(&(h.matrix() * C64::new(0.0, -s)))?))
    };
    // executed left to right; the last instruction is the leftmost factor
    let instrs = vec![gate(h1, dt)?, gate(h2, dt)?, gate(h1, -dt)?, gate(h2, -dt)?];
    Ok(ControlProgram::new(h1.dim(), instrs)?)
}

/// Execute `program` and report its distance to `target` (Frobenius norm of
/// the Choi difference). Enumerating the record tree is preferred because it
/// also validates the extracted family; when the tree exceeds the branch cap
/// the distance is computed through the transfer matrix instead, which is
/// polynomial in the instruction count.
pub fn verify(
    description: impl Into<String>,
    program: ControlProgram,
    target: &KrausChannel,
) -> Result<SynthesisReport, SynthError> {
    let d = require_square(target)?;
    if d != program.dim() {
        return Err(SynthError::Dimension(format!(
            "program dim {} vs target dim {d}",
            program.dim()
        )));
    }
    let distance = match sim::extract_channel(&program) {
        Ok(ch) => channel_distance(&ch, target),
        Err(SimError::BranchExplosion { .. }) => {
            let s = sim::transfer_matrix(&program)?;
            let cp = choi_from_transfer(d, &s)?;
            let ct = choi(target)?;
            (cp.matrix() - ct.matrix()).norm()
        }
        Err(e) => return Err(e.into()),
    };
    Ok(SynthesisReport {
        description: description.into(),
        distance,
        branch_count: program.branch_count(),
        step_count: program.step_count(),
        program,
    })
}
