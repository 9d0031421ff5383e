//! Control programs: the instruction set a synthesized evolution compiles to.
//!
//! A program is a sequence over one system dimension of
//! - unitary gates,
//! - Yes-No measurements (a coupling window plus the averaging schedule that
//!   shapes its effective operator),
//! - branches conditioned on the most recent outcome, and
//! - repetition of a sub-program.
//!
//! A branch may only appear immediately after a measurement. Programs are
//! validated exhaustively at construction so the simulator and serializers
//! can trust every instruction.

use thiserror::Error;

use crate::linalg::{unitarity_defect, CMat};
use crate::primitive::{effective_pair, AveragingSchedule, PrimitiveError};

/// Unitarity tolerance for gate instructions.
pub const GATE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error("instruction {index}: gate is not unitary (defect {defect:.3e})")]
    NotUnitary { index: usize, defect: f64 },
    #[error("instruction {index}: branch does not follow a measurement")]
    OrphanBranch { index: usize },
    #[error("instruction {index}: repeat count must be at least 1")]
    ZeroRepeat { index: usize },
    #[error("instruction {index}: dimension mismatch: {detail}")]
    Dimension { index: usize, detail: String },
    #[error("instruction {index}: invalid measurement: {source}")]
    Measurement {
        index: usize,
        #[source]
        source: PrimitiveError,
    },
    #[error("dimension must be at least 1")]
    ZeroDimension,
}

/// One step of a control program.
#[derive(Debug, Clone)]
pub enum Instruction {
    /// Apply a unitary gate.
    Unitary(CMat),
    /// Couple to the apparatus through `schedule` for a window `gamma_t`,
    /// then read the apparatus out (outcome 0 or 1).
    YesNoMeasure { gamma_t: f64, schedule: AveragingSchedule },
    /// Continue with `on0` or `on1` according to the preceding measurement.
    Branch { on0: ControlProgram, on1: ControlProgram },
    /// Execute `body` `count` times.
    Repeat { count: u64, body: ControlProgram },
}

/// A validated instruction sequence on a fixed system dimension.
#[derive(Debug, Clone)]
pub struct ControlProgram {
    d: usize,
    instructions: Vec<Instruction>,
}

impl ControlProgram {
    pub fn new(d: usize, instructions: Vec<Instruction>) -> Result<Self, ProgramError> {
        if d == 0 {
            return Err(ProgramError::ZeroDimension);
        }
        let mut after_measure = false;
        for (index, ins) in instructions.iter().enumerate() {
            match ins {
                Instruction::Unitary(u) => {
                    if u.nrows() != d || u.ncols() != d {
                        return Err(ProgramError::Dimension {
                            index,
                            detail: format!("gate is {}x{}, expected {d}x{d}", u.nrows(), u.ncols()),
                        });
                    }
                    let defect = unitarity_defect(u);
                    if !(defect <= GATE_TOL) {
                        return Err(ProgramError::NotUnitary { index, defect });
                    }
                    after_measure = false;
                }
                Instruction::YesNoMeasure { gamma_t, schedule } => {
                    if schedule.dim() != d {
                        return Err(ProgramError::Dimension {
                            index,
                            detail: format!("schedule dim {} vs program dim {d}", schedule.dim()),
                        });
                    }
                    effective_pair(*gamma_t, &schedule.realized_operator())
                        .map_err(|source| ProgramError::Measurement { index, source })?;
                    after_measure = true;
                }
                Instruction::Branch { on0, on1 } => {
                    if !after_measure {
                        return Err(ProgramError::OrphanBranch { index });
                    }
                    for (label, sub) in [("0", on0), ("1", on1)] {
                        if sub.dim() != d {
                            return Err(ProgramError::Dimension {
                                index,
                                detail: format!(
                                    "branch {label} has dim {}, expected {d}",
                                    sub.dim()
                                ),
                            });
                        }
                    }
                    after_measure = false;
                }
                Instruction::Repeat { count, body } => {
                    if *count == 0 {
                        return Err(ProgramError::ZeroRepeat { index });
                    }
                    if body.dim() != d {
                        return Err(ProgramError::Dimension {
                            index,
                            detail: format!("repeat body has dim {}, expected {d}", body.dim()),
                        });
                    }
                    after_measure = false;
                }
            }
        }
        Ok(Self { d, instructions })
    }

    /// The empty program (identity evolution) on dimension d.
    pub fn empty(d: usize) -> Result<Self, ProgramError> {
        Self::new(d, vec![])
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Number of outcome branches the program fans out into (saturating).
    /// Zero-probability branches count: this is the size of the record tree,
    /// which is what branch enumeration materializes.
    pub fn branch_count(&self) -> u64 {
        clamp_u128(leaves(&self.instructions))
    }

    /// Worst-case number of executed gate/measure steps along any single
    /// outcome path (saturating).
    pub fn step_count(&self) -> u64 {
        clamp_u128(steps(&self.instructions))
    }
}

fn clamp_u128(v: u128) -> u64 {
    v.min(u64::MAX as u128) as u64
}

const SAT: u128 = u128::MAX;

fn sat_mul(a: u128, b: u128) -> u128 {
    a.saturating_mul(b)
}

fn sat_pow(base: u128, exp: u64) -> u128 {
    let mut acc: u128 = 1;
    let mut b = base;
    let mut e = exp;
    loop {
        if e & 1 == 1 {
            acc = sat_mul(acc, b);
        }
        e >>= 1;
        if e == 0 || acc == SAT {
            return acc;
        }
        b = sat_mul(b, b);
    }
}

fn leaves(instrs: &[Instruction]) -> u128 {
    match instrs.split_first() {
        None => 1,
        Some((Instruction::Unitary(_), rest)) => leaves(rest),
        Some((Instruction::YesNoMeasure { .. }, rest)) => {
            if let Some((Instruction::Branch { on0, on1 }, tail)) = rest.split_first() {
                let fan = leaves(&on0.instructions).saturating_add(leaves(&on1.instructions));
                sat_mul(fan, leaves(tail))
            } else {
                sat_mul(2, leaves(rest))
            }
        }
        // validation guarantees a Branch is consumed by the measure arm
        Some((Instruction::Branch { .. }, rest)) => leaves(rest),
        Some((Instruction::Repeat { count, body }, rest)) => {
            sat_mul(sat_pow(leaves(&body.instructions), *count), leaves(rest))
        }
    }
}

fn steps(instrs: &[Instruction]) -> u128 {
    match instrs.split_first() {
        None => 0,
        Some((Instruction::Unitary(_), rest)) => 1u128.saturating_add(steps(rest)),
        Some((Instruction::YesNoMeasure { .. }, rest)) => {
            if let Some((Instruction::Branch { on0, on1 }, tail)) = rest.split_first() {
                let widest = steps(&on0.instructions).max(steps(&on1.instructions));
                1u128.saturating_add(widest).saturating_add(steps(tail))
            } else {
                1u128.saturating_add(steps(rest))
            }
        }
        Some((Instruction::Branch { .. }, rest)) => steps(rest),
        Some((Instruction::Repeat { count, body }, rest)) => {
            sat_mul(steps(&body.instructions), *count as u128).saturating_add(steps(rest))
        }
    }
}

/// Outcome of a synthesis pass: the compiled program plus its verification
/// distance and size counters (saturating at u64::MAX).
#[derive(Debug, Clone)]
pub struct SynthesisReport {
    pub description: String,
    pub program: ControlProgram,
    pub distance: f64,
    pub branch_count: u64,
    pub step_count: u64,
}
