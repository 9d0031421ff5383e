//! Dense density-matrix execution of control programs.
//!
//! Four routes through the same program, agreeing where their domains
//! overlap:
//! - [`run_branches`]: enumerate every outcome record, carrying unnormalized
//!   branch states whose traces are the record probabilities;
//! - [`extract_channel`]: the program as a Kraus channel, one element per
//!   record, in the same order;
//! - [`transfer_matrix`]: the program as a d²×d² superoperator — branch-free,
//!   so repeat-heavy programs stay polynomial;
//! - [`run_trajectories`]: seeded Monte Carlo sampling of single records.
//!
//! Branch enumeration and Kraus extraction check the statically known record
//! count against a cap before touching any state, so an explosive program
//! fails fast instead of exhausting memory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{ChannelError, DensityMatrix, KrausChannel};
use crate::linalg::{eye, kron, mat_power, unvec_col, vec_col, C64, CMat};
use crate::primitive::{effective_pair, PrimitiveError};
use crate::program::{ControlProgram, Instruction};

/// Default ceiling on the number of enumerated outcome records.
pub const DEFAULT_BRANCH_CAP: u64 = 1 << 20;

/// Below this trace a sampled branch is treated as numerically empty and the
/// complementary outcome is taken instead (the pair's traces sum to 1).
const TRAJ_FLOOR: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(
        "program enumerates {branches} outcome records, over the cap {cap}; \
         raise the cap, use the transfer-matrix route, or sample trajectories"
    )]
    BranchExplosion { branches: u64, cap: u64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("trajectory count must be at least 1")]
    ZeroTrajectories,
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// One enumerated outcome: the measurement record and the unnormalized state
/// conditioned on it. `state.trace()` is the record's probability.
#[derive(Debug, Clone)]
pub struct BranchState {
    pub state: CMat,
    pub record: Vec<u8>,
}

/// Program lowered to execution form: measurement pairs are materialized once
/// and a following Branch is folded into its measurement.
enum ExecOp {
    Gate(CMat),
    Measure { b0: CMat, b1: CMat, on0: Option<Vec<ExecOp>>, on1: Option<Vec<ExecOp>> },
    Repeat { count: u64, body: Vec<ExecOp> },
}

fn lower(program: &ControlProgram) -> Result<Vec<ExecOp>, SimError> {
    let instrs = program.instructions();
    let mut ops = Vec::with_capacity(instrs.len());
    let mut i = 0;
    while i < instrs.len() {
        match &instrs[i] {
            Instruction::Unitary(u) => ops.push(ExecOp::Gate(u.clone())),
            Instruction::YesNoMeasure { gamma_t, schedule } => {
                let pair = effective_pair(*gamma_t, &schedule.realized_operator())?;
                let (on0, on1) = match instrs.get(i + 1) {
                    Some(Instruction::Branch { on0, on1 }) => {
                        i += 1;
                        (Some(lower(on0)?), Some(lower(on1)?))
                    }
                    _ => (None, None),
                };
                ops.push(ExecOp::Measure {
                    b0: pair.b0.into_matrix(),
                    b1: pair.b1.into_matrix(),
                    on0,
                    on1,
                });
            }
            // program validation ties every Branch to the measurement before it
            Instruction::Branch { .. } => unreachable!("branch outside a measurement"),
            Instruction::Repeat { count, body } => {
                ops.push(ExecOp::Repeat { count: *count, body: lower(body)? });
            }
        }
        i += 1;
    }
    Ok(ops)
}

fn check_cap(program: &ControlProgram, cap: u64) -> Result<(), SimError> {
    let branches = program.branch_count();
    if branches > cap {
        return Err(SimError::BranchExplosion { branches, cap });
    }
    Ok(())
}

fn check_dim(program: &ControlProgram, initial: &DensityMatrix) -> Result<(), SimError> {
    if program.dim() != initial.dim() {
        return Err(SimError::DimensionMismatch(format!(
            "program dim {} vs state dim {}",
            program.dim(),
            initial.dim()
        )));
    }
    Ok(())
}

/// Enumerate all outcome records under the default cap.
pub fn run_branches(
    program: &ControlProgram,
    initial: &DensityMatrix,
) -> Result<Vec<BranchState>, SimError> {
    run_branches_capped(program, initial, DEFAULT_BRANCH_CAP)
}

/// Enumerate all outcome records. Records are emitted in lexicographic order
/// (outcome 0 before outcome 1 at every fork). Zero-probability branches are
/// kept so the record set is always complete.
pub fn run_branches_capped(
    program: &ControlProgram,
    initial: &DensityMatrix,
    cap: u64,
) -> Result<Vec<BranchState>, SimError> {
    check_dim(program, initial)?;
    check_cap(program, cap)?;
    let ops = lower(program)?;
    let seed = vec![BranchState { state: initial.matrix().clone(), record: Vec::new() }];
    Ok(exec_branches(&ops, seed))
}

fn exec_branches(ops: &[ExecOp], mut branches: Vec<BranchState>) -> Vec<BranchState> {
    for op in ops {
        match op {
            ExecOp::Gate(u) => {
                for b in &mut branches {
                    b.state = u * &b.state * u.adjoint();
                }
            }
            ExecOp::Measure { b0, b1, on0, on1 } => {
                let mut next = Vec::with_capacity(branches.len() * 2);
                for b in branches {
                    let s0 = b0 * &b.state * b0.adjoint();
                    let s1 = b1 * &b.state * b1.adjoint();
                    let mut r0 = b.record.clone();
                    r0.push(0);
                    let mut r1 = b.record;
                    r1.push(1);
                    let c0 = BranchState { state: s0, record: r0 };
                    let c1 = BranchState { state: s1, record: r1 };
                    match on0 {
                        Some(sub) => next.extend(exec_branches(sub, vec![c0])),
                        None => next.push(c0),
                    }
                    match on1 {
                        Some(sub) => next.extend(exec_branches(sub, vec![c1])),
                        None => next.push(c1),
                    }
                }
                branches = next;
            }
            ExecOp::Repeat { count, body } => {
                for _ in 0..*count {
                    branches = exec_branches(body, branches);
                }
            }
        }
    }
    branches
}

/// Sum of the unnormalized branch states: the unconditioned output state.
pub fn branch_sum(branches: &[BranchState]) -> Result<DensityMatrix, SimError> {
    let first = branches
        .first()
        .ok_or_else(|| SimError::DimensionMismatch("empty branch list".into()))?;
    let mut acc = CMat::zeros(first.state.nrows(), first.state.ncols());
    for b in branches {
        acc += &b.state;
    }
    Ok(DensityMatrix::from_map_output(acc)?)
}

/// Kraus elements of the program, one per outcome record, in record order.
pub fn extract_elements(program: &ControlProgram) -> Result<Vec<(CMat, Vec<u8>)>, SimError> {
    extract_elements_capped(program, DEFAULT_BRANCH_CAP)
}

pub fn extract_elements_capped(
    program: &ControlProgram,
    cap: u64,
) -> Result<Vec<(CMat, Vec<u8>)>, SimError> {
    check_cap(program, cap)?;
    let ops = lower(program)?;
    let seed = vec![(eye(program.dim()), Vec::new())];
    Ok(exec_elements(&ops, seed))
}

fn exec_elements(ops: &[ExecOp], mut elements: Vec<(CMat, Vec<u8>)>) -> Vec<(CMat, Vec<u8>)> {
    for op in ops {
        match op {
            ExecOp::Gate(u) => {
                for (k, _) in &mut elements {
                    *k = u * &*k;
                }
            }
            ExecOp::Measure { b0, b1, on0, on1 } => {
                let mut next = Vec::with_capacity(elements.len() * 2);
                for (k, record) in elements {
                    let k0 = b0 * &k;
                    let k1 = b1 * &k;
                    let mut r0 = record.clone();
                    r0.push(0);
                    let mut r1 = record;
                    r1.push(1);
                    match on0 {
                        Some(sub) => next.extend(exec_elements(sub, vec![(k0, r0)])),
                        None => next.push((k0, r0)),
                    }
                    match on1 {
                        Some(sub) => next.extend(exec_elements(sub, vec![(k1, r1)])),
                        None => next.push((k1, r1)),
                    }
                }
                elements = next;
            }
            ExecOp::Repeat { count, body } => {
                for _ in 0..*count {
                    elements = exec_elements(body, elements);
                }
            }
        }
    }
    elements
}

/// The channel the program implements, as an explicit Kraus family.
pub fn extract_channel(program: &ControlProgram) -> Result<KrausChannel, SimError> {
    extract_channel_capped(program, DEFAULT_BRANCH_CAP)
}

pub fn extract_channel_capped(
    program: &ControlProgram,
    cap: u64,
) -> Result<KrausChannel, SimError> {
    let ops = extract_elements_capped(program, cap)?
        .into_iter()
        .map(|(k, _)| k)
        .collect();
    Ok(KrausChannel::with_tolerance(ops, 1e-9)?)
}

/// The program's action as a d²×d² superoperator on column-stacked states.
/// Branch forks become sums and repeats become matrix powers, so the cost is
/// polynomial in the instruction count regardless of the record count.
pub fn transfer_matrix(program: &ControlProgram) -> Result<CMat, SimError> {
    let ops = lower(program)?;
    Ok(exec_transfer(&ops, program.dim()))
}

fn exec_transfer(ops: &[ExecOp], d: usize) -> CMat {
    let mut s = eye(d * d);
    for op in ops {
        match op {
            ExecOp::Gate(u) => s = kron(&u.conjugate(), u) * s,
            ExecOp::Measure { b0, b1, on0, on1 } => {
                let mut k0 = kron(&b0.conjugate(), b0);
                let mut k1 = kron(&b1.conjugate(), b1);
                if let Some(sub) = on0 {
                    k0 = exec_transfer(sub, d) * k0;
                }
                if let Some(sub) = on1 {
                    k1 = exec_transfer(sub, d) * k1;
                }
                s = (k0 + k1) * s;
            }
            ExecOp::Repeat { count, body } => {
                s = mat_power(&exec_transfer(body, d), *count) * s;
            }
        }
    }
    s
}

/// Apply a transfer matrix to a state (column-stacking convention).
pub fn apply_transfer(s: &CMat, rho: &DensityMatrix) -> Result<DensityMatrix, SimError> {
    let d = rho.dim();
    if s.nrows() != d * d || s.ncols() != d * d {
        return Err(SimError::DimensionMismatch(format!(
            "transfer matrix is {}x{}, state needs {}x{}",
            s.nrows(),
            s.ncols(),
            d * d,
            d * d
        )));
    }
    let out = s * vec_col(rho.matrix());
    Ok(DensityMatrix::from_map_output(unvec_col(d, &out))?)
}

/// Monte Carlo sampling setup. `seed` fixes the whole ensemble: trajectory i
/// draws from an independent stream of one generator keyed by (seed, i), so
/// results are bitwise identical for any worker count.
#[derive(Debug, Clone)]
pub struct TrajectoryConfig {
    pub seed: u64,
    pub count: usize,
    pub initial: DensityMatrix,
}

/// Ensemble mean and its standard error (Frobenius norm of the per-trajectory
/// scatter; 0 when a single trajectory was run).
#[derive(Debug, Clone)]
pub struct TrajectoryEstimate {
    pub mean: DensityMatrix,
    pub std_error: f64,
}

/// Sample outcome records instead of enumerating them. Each trajectory keeps
/// one normalized state and draws each outcome with its conditional
/// probability, so the trajectory mean is an unbiased estimate of the branch
/// sum at O(steps) memory per worker.
pub fn run_trajectories(
    program: &ControlProgram,
    cfg: &TrajectoryConfig,
) -> Result<TrajectoryEstimate, SimError> {
    check_dim(program, &cfg.initial)?;
    if cfg.count == 0 {
        return Err(SimError::ZeroTrajectories);
    }
    let ops = lower(program)?;
    let states: Vec<CMat> = (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let mut state = cfg.initial.matrix().clone();
            exec_trajectory(&ops, &mut state, &mut rng);
            state
        })
        .collect();

    // sequential reduction in index order keeps the mean independent of the
    // rayon split
    let d = cfg.initial.dim();
    let mut acc = CMat::zeros(d, d);
    for s in &states {
        acc += s;
    }
    let inv_n = C64::new(1.0 / cfg.count as f64, 0.0);
    let mean_m = acc * inv_n;
    let mut scatter = 0.0;
    if cfg.count > 1 {
        for s in &states {
            scatter += (s - &mean_m).norm_squared();
        }
        scatter /= (cfg.count * (cfg.count - 1)) as f64;
    }
    Ok(TrajectoryEstimate {
        mean: DensityMatrix::from_map_output(mean_m)?,
        std_error: scatter.sqrt(),
    })
}

fn exec_trajectory(ops: &[ExecOp], state: &mut CMat, rng: &mut ChaCha12Rng) {
    for op in ops {
        match op {
            ExecOp::Gate(u) => *state = u * &*state * u.adjoint(),
            ExecOp::Measure { b0, b1, on0, on1 } => {
                let s0 = b0 * &*state * b0.adjoint();
                let p0 = s0.trace().re.clamp(0.0, 1.0);
                let mut pick0 = rng.random::<f64>() < p0;
                let selected = if pick0 { s0 } else { b1 * &*state * b1.adjoint() };
                let mut tr = selected.trace().re;
                if tr <= TRAJ_FLOOR {
                    // the drawn branch is numerically empty; its counterpart
                    // carries all the weight
                    pick0 = !pick0;
                    let other =
                        if pick0 { b0 * &*state * b0.adjoint() } else { b1 * &*state * b1.adjoint() };
                    tr = other.trace().re;
                    *state = other * C64::new(1.0 / tr, 0.0);
                } else {
                    *state = selected * C64::new(1.0 / tr, 0.0);
                }
                let sub = if pick0 { on0 } else { on1 };
                if let Some(sub) = sub {
                    exec_trajectory(sub, state, rng);
                }
            }
            ExecOp::Repeat { count, body } => {
                for _ in 0..*count {
                    exec_trajectory(body, state, rng);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::trace_distance;
    use crate::primitive::AveragingSchedule;
    use crate::random;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    fn measure(d: usize, gamma_t: f64) -> Instruction {
        Instruction::YesNoMeasure { gamma_t, schedule: AveragingSchedule::identity(d).unwrap() }
    }

    fn frob(m: &CMat) -> f64 {
        m.norm()
    }

    #[test]
    fn unitary_program_conjugates() {
        let mut rng = random::rng(501);
        let u = random::unitary(3, &mut rng);
        let rho = random::density(3, &mut rng);
        let p = ControlProgram::new(3, vec![Instruction::Unitary(u.clone())]).unwrap();
        let branches = run_branches(&p, &rho).unwrap();
        assert_eq!(branches.len(), 1);
        assert!(branches[0].record.is_empty());
        let expect = &u * rho.matrix() * u.adjoint();
        assert!(frob(&(&branches[0].state - expect)) < 1e-12);
    }

    #[test]
    fn measurement_branches_match_readout() {
        // window π/4 on the maximally mixed qubit: probabilities 3/4 and 1/4
        let rho = DensityMatrix::maximally_mixed(2);
        let p = ControlProgram::new(2, vec![measure(2, FRAC_PI_4)]).unwrap();
        let branches = run_branches(&p, &rho).unwrap();
        assert_eq!(branches.len(), 2);
        assert_eq!(branches[0].record, vec![0]);
        assert_eq!(branches[1].record, vec![1]);
        assert_abs_diff_eq!(branches[0].state.trace().re, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(branches[1].state.trace().re, 0.25, epsilon = 1e-12);
        let post0 = &branches[0].state / C64::new(0.75, 0.0);
        assert_abs_diff_eq!(post0[(0, 0)].re, 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(post0[(1, 1)].re, 2.0 / 3.0, epsilon = 1e-12);
        let post1 = &branches[1].state / C64::new(0.25, 0.0);
        assert_abs_diff_eq!(post1[(0, 0)].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn records_are_lexicographic() {
        let body = ControlProgram::new(2, vec![measure(2, 0.3)]).unwrap();
        let p = ControlProgram::new(2, vec![Instruction::Repeat { count: 2, body }]).unwrap();
        let rho = DensityMatrix::maximally_mixed(2);
        let branches = run_branches(&p, &rho).unwrap();
        let records: Vec<Vec<u8>> = branches.iter().map(|b| b.record.clone()).collect();
        assert_eq!(records, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        // probabilities sum to one even with every fork retained
        let total: f64 = branches.iter().map(|b| b.state.trace().re).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn branch_cap_is_static_and_fast() {
        let body = ControlProgram::new(2, vec![measure(2, 0.3)]).unwrap();
        let p = ControlProgram::new(2, vec![Instruction::Repeat { count: 40, body }]).unwrap();
        let rho = DensityMatrix::maximally_mixed(2);
        match run_branches(&p, &rho) {
            Err(SimError::BranchExplosion { branches, cap }) => {
                assert_eq!(branches, 1 << 40);
                assert_eq!(cap, DEFAULT_BRANCH_CAP);
            }
            other => panic!("expected explosion, got {other:?}"),
        }
        // exact cap passes, one less fails
        let two = ControlProgram::new(2, vec![measure(2, 0.3)]).unwrap();
        assert!(run_branches_capped(&two, &rho, 2).is_ok());
        assert!(matches!(
            run_branches_capped(&two, &rho, 1),
            Err(SimError::BranchExplosion { .. })
        ));
    }

    #[test]
    fn extracted_elements_are_operator_products() {
        let mut rng = random::rng(502);
        let u = random::unitary(2, &mut rng);
        let feedback = ControlProgram::new(2, vec![Instruction::Unitary(u.clone())]).unwrap();
        let p = ControlProgram::new(
            2,
            vec![
                measure(2, 0.7),
                Instruction::Branch { on0: ControlProgram::empty(2).unwrap(), on1: feedback },
            ],
        )
        .unwrap();
        let pair =
            effective_pair(0.7, &AveragingSchedule::identity(2).unwrap().realized_operator())
                .unwrap();
        let elems = extract_elements(&p).unwrap();
        assert_eq!(elems.len(), 2);
        assert_eq!(elems[0].1, vec![0]);
        assert_eq!(elems[1].1, vec![1]);
        assert!(frob(&(&elems[0].0 - pair.b0.matrix())) < 1e-12);
        assert!(frob(&(&elems[1].0 - &u * pair.b1.matrix())) < 1e-12);
        // the family is complete, so channel construction succeeds
        extract_channel(&p).unwrap();
    }

    fn sample_program(rng: &mut ChaCha12Rng) -> ControlProgram {
        let u0 = random::unitary(2, rng);
        let u1 = random::unitary(2, rng);
        let pre = random::unitary(2, rng);
        let on0 = ControlProgram::new(2, vec![Instruction::Unitary(u0)]).unwrap();
        let on1 = ControlProgram::new(2, vec![Instruction::Unitary(u1)]).unwrap();
        let body = ControlProgram::new(
            2,
            vec![measure(2, 0.9), Instruction::Branch { on0, on1 }],
        )
        .unwrap();
        ControlProgram::new(
            2,
            vec![
                Instruction::Unitary(pre),
                Instruction::Repeat { count: 3, body },
                measure(2, 0.4),
            ],
        )
        .unwrap()
    }

    #[test]
    fn routes_agree_on_a_mixed_program() {
        let mut rng = random::rng(503);
        let p = sample_program(&mut rng);
        let rho = random::density(2, &mut rng);

        let branches = run_branches(&p, &rho).unwrap();
        assert_eq!(branches.len() as u64, p.branch_count());
        let summed = branch_sum(&branches).unwrap();

        let ch = extract_channel(&p).unwrap();
        let via_kraus = ch.apply(&rho).unwrap();
        assert!(trace_distance(&summed, &via_kraus) < 1e-10);

        let s = transfer_matrix(&p).unwrap();
        let via_transfer = apply_transfer(&s, &rho).unwrap();
        assert!(trace_distance(&summed, &via_transfer) < 1e-10);

        // per-record agreement between state evolution and extracted elements
        let elems = extract_elements(&p).unwrap();
        for (b, (k, rec)) in branches.iter().zip(&elems) {
            assert_eq!(&b.record, rec);
            let via_elem = k * rho.matrix() * k.adjoint();
            assert!(frob(&(&b.state - via_elem)) < 1e-10);
        }
    }

    #[test]
    fn transfer_route_survives_deep_repeats() {
        // 2^40 records by enumeration; constant-size superoperator instead
        let body = ControlProgram::new(2, vec![measure(2, 0.3)]).unwrap();
        let deep =
            ControlProgram::new(2, vec![Instruction::Repeat { count: 40, body: body.clone() }])
                .unwrap();
        let s = transfer_matrix(&deep).unwrap();
        let single = transfer_matrix(&body).unwrap();
        assert!(frob(&(&s - mat_power(&single, 40))) < 1e-10);
        // trace preservation: vec(I)† is a left fixed point
        let iv = vec_col(&eye(2));
        let lhs = s.adjoint() * &iv;
        assert!((lhs - iv).norm() < 1e-10);
    }

    #[test]
    fn transfer_matches_unrolled_repeat() {
        let mut rng = random::rng(504);
        let u = random::unitary(2, &mut rng);
        let body = ControlProgram::new(
            2,
            vec![measure(2, 0.6), Instruction::Unitary(u.clone())],
        )
        .unwrap();
        let rolled =
            ControlProgram::new(2, vec![Instruction::Repeat { count: 3, body: body.clone() }])
                .unwrap();
        let unrolled = ControlProgram::new(
            2,
            vec![
                measure(2, 0.6),
                Instruction::Unitary(u.clone()),
                measure(2, 0.6),
                Instruction::Unitary(u.clone()),
                measure(2, 0.6),
                Instruction::Unitary(u),
            ],
        )
        .unwrap();
        let a = transfer_matrix(&rolled).unwrap();
        let b = transfer_matrix(&unrolled).unwrap();
        assert!(frob(&(a - b)) < 1e-12);
    }

    #[test]
    fn trajectories_reproduce_and_ignore_worker_count() {
        let mut rng = random::rng(505);
        let p = sample_program(&mut rng);
        let cfg = TrajectoryConfig {
            seed: 42,
            count: 300,
            initial: random::density(2, &mut rng),
        };
        let a = run_trajectories(&p, &cfg).unwrap();
        let b = run_trajectories(&p, &cfg).unwrap();
        assert_eq!(a.mean.matrix().as_slice(), b.mean.matrix().as_slice());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());

        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let r1 = pool1.install(|| run_trajectories(&p, &cfg)).unwrap();
        let r4 = pool4.install(|| run_trajectories(&p, &cfg)).unwrap();
        assert_eq!(r1.mean.matrix().as_slice(), r4.mean.matrix().as_slice());
        assert_eq!(r1.std_error.to_bits(), r4.std_error.to_bits());
    }

    #[test]
    fn trajectory_mean_tracks_branch_sum() {
        let mut rng = random::rng(506);
        let p = sample_program(&mut rng);
        let rho = random::density(2, &mut rng);
        let exact = branch_sum(&run_branches(&p, &rho).unwrap()).unwrap();
        let cfg = TrajectoryConfig { seed: 7, count: 4000, initial: rho };
        let est = run_trajectories(&p, &cfg).unwrap();
        let err = frob(&(est.mean.matrix() - exact.matrix()));
        assert!(est.std_error > 0.0);
        assert!(
            err < 5.0 * est.std_error,
            "mean off by {err:.3e} vs std error {:.3e}",
            est.std_error
        );
    }

    #[test]
    fn deterministic_program_has_zero_scatter() {
        let mut rng = random::rng(507);
        let u = random::unitary(2, &mut rng);
        let p = ControlProgram::new(2, vec![Instruction::Unitary(u.clone())]).unwrap();
        let rho = DensityMatrix::basis_state(2, 0).unwrap();
        let cfg = TrajectoryConfig { seed: 1, count: 64, initial: rho.clone() };
        let est = run_trajectories(&p, &cfg).unwrap();
        assert_abs_diff_eq!(est.std_error, 0.0, epsilon = 1e-14);
        let expect = &u * rho.matrix() * u.adjoint();
        assert!(frob(&(est.mean.matrix() - expect)) < 1e-12);
    }

    #[test]
    fn trajectory_input_gates() {
        let p = ControlProgram::new(2, vec![measure(2, 0.5)]).unwrap();
        let cfg =
            TrajectoryConfig { seed: 0, count: 0, initial: DensityMatrix::maximally_mixed(2) };
        assert!(matches!(run_trajectories(&p, &cfg), Err(SimError::ZeroTrajectories)));
        let cfg =
            TrajectoryConfig { seed: 0, count: 1, initial: DensityMatrix::maximally_mixed(3) };
        assert!(matches!(run_trajectories(&p, &cfg), Err(SimError::DimensionMismatch(_))));
        // single trajectory reports zero scatter
        let cfg =
            TrajectoryConfig { seed: 0, count: 1, initial: DensityMatrix::maximally_mixed(2) };
        assert_abs_diff_eq!(run_trajectories(&p, &cfg).unwrap().std_error, 0.0);
    }

    #[test]
    fn transfer_agrees_with_kraus_transfer() {
        let mut rng = random::rng(508);
        let p = sample_program(&mut rng);
        let via_program = transfer_matrix(&p).unwrap();
        let via_channel = extract_channel(&p).unwrap().transfer_matrix();
        assert!(frob(&(via_program - via_channel)) < 1e-10);
    }

}
