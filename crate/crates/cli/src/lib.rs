//! `oqcc` — compile, simulate, and verify open-quantum-system control
//! programs.
//!
//! Four subcommands over the JSON file formats in [`files`]:
//!
//! - `compile`: a Kraus-family target or a Markovian generator becomes a
//!   control program; a one-line synthesis report goes to stdout.
//! - `simulate`: run a program on a state, either exactly (branch sum) or by
//!   seeded trajectory sampling.
//! - `verify`: distance between a program's channel and a target family.
//! - `lindblad`: per-step-count error of the stroboscopic construction
//!   against exact propagation, with a fitted log-log slope.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error,
//! 3 synthesis failure, 4 resource cap. All reports are single-line JSON
//! (`--pretty` expands them); stdout is byte-deterministic for fixed inputs
//! apart from the version banner, which `--quiet` suppresses.

// negated float comparisons like !(t > 0.0) are deliberate: they reject NaN,
// which the suggested t <= 0.0 would accept
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;

use oqcc_core::channel::{choi_from_transfer, trace_distance};
use oqcc_core::lindblad::{liouvillian, propagate, CanonicalGenerator, TraceSplit};
use oqcc_core::linalg::{expm, C64};
use oqcc_core::program::ControlProgram;
use oqcc_core::sim::{
    apply_transfer, branch_sum, run_branches_capped, run_trajectories, transfer_matrix,
    SimError, TrajectoryConfig, DEFAULT_BRANCH_CAP,
};
use oqcc_core::synth::{
    synth_lindblad, synth_multi_outcome, synth_two_outcome, verify, SynthError,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY_FAIL: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_SYNTHESIS: u8 = 3;
pub const EXIT_RESOURCE: u8 = 4;

/// Environment variable overriding the branch-enumeration cap.
pub const BRANCH_CAP_ENV: &str = "OQCC_BRANCH_CAP";

#[derive(Parser)]
#[command(name = "oqcc", version, about = "Open-quantum-system control compiler and simulator")]
pub struct Cli {
    /// Suppress the version banner on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Pretty-print JSON reports.
    #[arg(long, global = true)]
    pub pretty: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Compile a target channel or generator into a control program.
    Compile(CompileArgs),
    /// Execute a program on an input state.
    Simulate(SimulateArgs),
    /// Compare a program's channel against a target family.
    Verify(VerifyArgs),
    /// Sweep step counts of the stroboscopic construction against exact
    /// propagation.
    Lindblad(LindbladArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["target", "generator"])))]
pub struct CompileArgs {
    /// Target channel file (Kraus family).
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Target generator file; requires --time and --steps.
    #[arg(long, requires = "time", requires = "steps")]
    pub generator: Option<PathBuf>,
    /// Total evolution time for a generator target.
    #[arg(long)]
    pub time: Option<f64>,
    /// Step count for a generator target.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Output program file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Program file to execute.
    #[arg(long)]
    pub program: PathBuf,
    /// Input density-matrix file.
    #[arg(long)]
    pub state: PathBuf,
    /// Sample this many trajectories instead of enumerating branches.
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Seed for trajectory sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output density-matrix file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Program file to check.
    #[arg(long)]
    pub program: PathBuf,
    /// Target channel file.
    #[arg(long)]
    pub target: PathBuf,
    /// Acceptance threshold on the Choi-matrix distance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Args)]
pub struct LindbladArgs {
    /// Generator file.
    #[arg(long)]
    pub generator: PathBuf,
    /// Total evolution time.
    #[arg(long)]
    pub time: f64,
    /// Comma-separated, strictly ascending step counts, e.g. "16,32,64,128".
    #[arg(long = "steps-list")]
    pub steps_list: String,
    /// State file for the per-step state-error column.
    #[arg(long)]
    pub state: PathBuf,
}

/// Operational failure carrying its exit code.
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }

    fn synthesis(message: impl Into<String>) -> Self {
        Self { code: EXIT_SYNTHESIS, message: message.into() }
    }

    fn resource(message: impl Into<String>) -> Self {
        Self { code: EXIT_RESOURCE, message: message.into() }
    }
}

impl From<files::FormatError> for CliError {
    fn from(e: files::FormatError) -> Self {
        CliError::input(e.to_string())
    }
}

fn synth_err(e: SynthError) -> CliError {
    match e {
        SynthError::CouplingOutOfRange { .. } => {
            CliError::synthesis(format!("{e} (hint: increase --steps)"))
        }
        SynthError::Dimension(_) => CliError::input(e.to_string()),
        other => CliError::synthesis(other.to_string()),
    }
}

fn sim_err(e: SimError) -> CliError {
    match e {
        SimError::BranchExplosion { .. } => CliError::resource(format!(
            "{e} (hint: sample with --trajectories, or set {BRANCH_CAP_ENV})"
        )),
        other => CliError::input(other.to_string()),
    }
}

/// Best-effort stdout line: a consumer that closes the pipe early (e.g.
/// `head`) must not turn a correct run into a panic — the exit code, not the
/// report, is the machine contract.
fn emit_line(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn emit<T: Serialize>(pretty: bool, value: &T) {
    let text = if pretty {
        serde_json::to_string_pretty(value)
    } else {
        serde_json::to_string(value)
    }
    .expect("report serialization cannot fail");
    emit_line(&text);
}

fn warn_splits(splits: &[TraceSplit]) {
    for s in splits {
        eprintln!(
            "warning: jump operator {} carries trace part α = {:.6e}{:+.6e}i; \
             folded into the Hamiltonian",
            s.index, s.alpha.re, s.alpha.im
        );
    }
}

fn branch_cap_from_env() -> Result<u64, CliError> {
    match std::env::var(BRANCH_CAP_ENV) {
        Ok(s) => s.parse::<u64>().map_err(|_| {
            CliError::input(format!("{BRANCH_CAP_ENV} must be a non-negative integer, got {s:?}"))
        }),
        Err(_) => Ok(DEFAULT_BRANCH_CAP),
    }
}

#[derive(Serialize)]
struct CompileReport {
    description: String,
    distance: f64,
    branch_count: u64,
    step_count: u64,
}

/// Choi-matrix distance between a compiled program and exact generator
/// propagation over `time`.
fn generator_distance(
    g: &CanonicalGenerator,
    time: f64,
    program: &ControlProgram,
) -> Result<f64, CliError> {
    let d = g.dim();
    let s_prog = transfer_matrix(program).map_err(sim_err)?;
    let lv = liouvillian(g).map_err(|e| CliError::synthesis(e.to_string()))?;
    let s_exact = expm(&(lv.matrix() * C64::new(time, 0.0)))
        .map_err(|e| CliError::synthesis(e.to_string()))?;
    let cp = choi_from_transfer(d, &s_prog).map_err(|e| CliError::synthesis(e.to_string()))?;
    let ce = choi_from_transfer(d, &s_exact).map_err(|e| CliError::synthesis(e.to_string()))?;
    Ok((cp.matrix() - ce.matrix()).norm())
}

fn cmd_compile(args: &CompileArgs, pretty: bool) -> Result<u8, CliError> {
    let (description, program, distance) = if let Some(path) = &args.target {
        let ch = files::read_channel(path)?;
        let k = ch.ops().len();
        let program = if k == 2 { synth_two_outcome(&ch) } else { synth_multi_outcome(&ch) }
            .map_err(synth_err)?;
        let description = format!("channel target ({} outcomes, dim {})", k, ch.dim_in());
        let report = verify(description, program, &ch).map_err(synth_err)?;
        (report.description, report.program, report.distance)
    } else {
        let path = args.generator.as_ref().expect("clap enforces the source group");
        let time = args.time.expect("clap requires --time with --generator");
        let steps = args.steps.expect("clap requires --steps with --generator");
        if !(time > 0.0) || !time.is_finite() {
            return Err(CliError::input(format!("--time must be positive and finite, got {time}")));
        }
        let (g, splits) = files::read_generator(path)?;
        warn_splits(&splits);
        let program = synth_lindblad(&g, time, steps).map_err(synth_err)?;
        let distance = generator_distance(&g, time, &program)?;
        let description =
            format!("generator target (dim {}, time {}, steps {})", g.dim(), time, steps);
        (description, program, distance)
    };
    files::write_program(&args.out, &program)?;
    emit(
        pretty,
        &CompileReport {
            description,
            distance,
            branch_count: program.branch_count(),
            step_count: program.step_count(),
        },
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct BranchSumReport {
    mode: &'static str,
    branches: usize,
    purity: f64,
}

#[derive(Serialize)]
struct TrajectoryReport {
    mode: &'static str,
    trajectories: usize,
    seed: u64,
    std_error: f64,
}

fn cmd_simulate(args: &SimulateArgs, pretty: bool) -> Result<u8, CliError> {
    let program = files::read_program(&args.program)?;
    let state = files::read_state(&args.state)?;
    match args.trajectories {
        None => {
            let cap = branch_cap_from_env()?;
            let branches = run_branches_capped(&program, &state, cap).map_err(sim_err)?;
            let out = branch_sum(&branches).map_err(sim_err)?;
            files::write_matrix(&args.out, out.matrix())?;
            emit(
                pretty,
                &BranchSumReport {
                    mode: "branch-sum",
                    branches: branches.len(),
                    purity: out.purity(),
                },
            );
        }
        Some(count) => {
            let cfg = TrajectoryConfig { seed: args.seed, count, initial: state };
            let est = run_trajectories(&program, &cfg).map_err(sim_err)?;
            files::write_matrix(&args.out, est.mean.matrix())?;
            emit(
                pretty,
                &TrajectoryReport {
                    mode: "trajectories",
                    trajectories: count,
                    seed: args.seed,
                    std_error: est.std_error,
                },
            );
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct VerifyReport {
    distance: f64,
    tol: f64,
    pass: bool,
}

fn cmd_verify(args: &VerifyArgs, pretty: bool) -> Result<u8, CliError> {
    if !(args.tol > 0.0) || !args.tol.is_finite() {
        return Err(CliError::input(format!("--tol must be positive and finite, got {}", args.tol)));
    }
    let program = files::read_program(&args.program)?;
    let target = files::read_channel(&args.target)?;
    let report = verify("verify", program, &target).map_err(synth_err)?;
    let pass = report.distance <= args.tol;
    emit(pretty, &VerifyReport { distance: report.distance, tol: args.tol, pass });
    Ok(if pass { EXIT_OK } else { EXIT_VERIFY_FAIL })
}

#[derive(Serialize)]
struct LindbladEntry {
    steps: u64,
    channel_error: f64,
    state_error: f64,
}

#[derive(Serialize)]
struct LindbladReport {
    time: f64,
    entries: Vec<LindbladEntry>,
    slope: f64,
}

fn parse_steps_list(s: &str) -> Result<Vec<u64>, CliError> {
    let steps: Vec<u64> = s
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u64>()
                .map_err(|_| CliError::input(format!("--steps-list entry {tok:?} is not an integer")))
        })
        .collect::<Result<_, _>>()?;
    if steps.is_empty() || steps[0] == 0 {
        return Err(CliError::input("--steps-list needs at least one positive entry"));
    }
    if !steps.windows(2).all(|w| w[0] < w[1]) {
        return Err(CliError::input("--steps-list must be strictly ascending"));
    }
    Ok(steps)
}

/// Least-squares slope of ln y against ln x; y is floored to keep the fit
/// finite when errors sit at the numerical floor.
fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).map(|(&x, &y)| (x.ln(), y.max(1e-300).ln())).collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn cmd_lindblad(args: &LindbladArgs, pretty: bool) -> Result<u8, CliError> {
    if !(args.time > 0.0) || !args.time.is_finite() {
        return Err(CliError::input(format!(
            "--time must be positive and finite, got {}",
            args.time
        )));
    }
    let steps = parse_steps_list(&args.steps_list)?;
    let (g, splits) = files::read_generator(&args.generator)?;
    warn_splits(&splits);
    let state = files::read_state(&args.state)?;
    if state.dim() != g.dim() {
        return Err(CliError::input(format!(
            "state dim {} vs generator dim {}",
            state.dim(),
            g.dim()
        )));
    }
    let d = g.dim();
    let lv = liouvillian(&g).map_err(|e| CliError::synthesis(e.to_string()))?;
    let s_exact = expm(&(lv.matrix() * C64::new(args.time, 0.0)))
        .map_err(|e| CliError::synthesis(e.to_string()))?;
    let choi_exact =
        choi_from_transfer(d, &s_exact).map_err(|e| CliError::synthesis(e.to_string()))?;
    let state_exact =
        propagate(&g, &state, args.time).map_err(|e| CliError::synthesis(e.to_string()))?;

    let mut entries = Vec::with_capacity(steps.len());
    for &n in &steps {
        let program = synth_lindblad(&g, args.time, n).map_err(synth_err)?;
        let s_prog = transfer_matrix(&program).map_err(sim_err)?;
        let choi_prog =
            choi_from_transfer(d, &s_prog).map_err(|e| CliError::synthesis(e.to_string()))?;
        let channel_error = (choi_prog.matrix() - choi_exact.matrix()).norm();
        let state_prog = apply_transfer(&s_prog, &state).map_err(sim_err)?;
        let state_error = trace_distance(&state_prog, &state_exact);
        entries.push(LindbladEntry { steps: n, channel_error, state_error });
    }
    let xs: Vec<f64> = steps.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = entries.iter().map(|e| e.channel_error).collect();
    let slope = log_log_slope(&xs, &ys);
    emit(pretty, &LindbladReport { time: args.time, entries, slope });
    Ok(EXIT_OK)
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Compile(args) => cmd_compile(args, cli.pretty),
        Command::Simulate(args) => cmd_simulate(args, cli.pretty),
        Command::Verify(args) => cmd_verify(args, cli.pretty),
        Command::Lindblad(args) => cmd_lindblad(args, cli.pretty),
    }
}

/// Route library warnings (trace splits, cascade closures) to stderr so
/// stdout stays machine-readable.
struct StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= log::Level::Warn
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!("{}: {}", record.level().to_string().to_lowercase(), record.args());
        }
    }

    fn flush(&self) {}
}

static LOGGER: StderrLogger = StderrLogger;

pub fn main_entry() -> ExitCode {
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(log::LevelFilter::Warn);
    }
    let cli = Cli::parse();
    if !cli.quiet {
        emit_line(&format!("oqcc {}", env!("CARGO_PKG_VERSION")));
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
