//! Open-quantum-system control toolkit.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: dense complex linear algebra (Hermitian eigensystems, matrix
//!   functions, polar decomposition, support pseudo-inverse, expm).
//! - [`channel`]: density matrices, Kraus channels, Choi matrices, and
//!   projective/generalized measurement.
//! - [`lindblad`]: Markovian generators in matrix (GKS) and operator
//!   (canonical) form, their superoperators, and exact propagation.
//! - [`primitive`]: the one nontrivial control resource, a two-outcome
//!   system-apparatus coupling with tunable strength, plus the averaging
//!   schedules that shape its effective coupling operator.
//! - [`program`]: control programs built from unitaries, the coupling
//!   measurement, outcome-conditioned branches, and repetition.
//! - [`synth`]: compilation of target channels and generators into programs.
//! - [`sim`]: dense execution of programs (branch enumeration, channel
//!   extraction, transfer matrices, stochastic trajectories).
//! - [`random`]: seeded generators for states, unitaries, channels, and
//!   generators, shared by tests and benchmarks.

// negated float comparisons like !(t > 0.0) are deliberate: they reject NaN,
// which the suggested t <= 0.0 would accept
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod lindblad;
pub mod linalg;
pub mod primitive;
pub mod program;
pub mod random;
pub mod sim;
pub mod synth;

pub use channel::{ChoiMatrix, DensityMatrix, KrausChannel, MeasurementOutcome};
pub use lindblad::{CanonicalGenerator, GKSGenerator, OperatorBasis, Superoperator};
pub use linalg::{C64, CMat, CVec, HermitianMatrix, PolarFactors};
pub use primitive::{AveragingSchedule, EffectivePair, YesNoPrimitive};
pub use program::{ControlProgram, Instruction, SynthesisReport};
pub use sim::{BranchState, TrajectoryConfig, TrajectoryEstimate};
pub use synth::{synth_lindblad, synth_multi_outcome, synth_two_outcome, verify};
