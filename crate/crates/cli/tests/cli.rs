//! End-to-end tests of the `oqcc` binary: exit codes, report shapes, file
//! outputs, and stdout determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oqcc::files;
use oqcc_core::channel::KrausChannel;
use oqcc_core::lindblad::CanonicalGenerator;
use oqcc_core::linalg::{C64, CMat, HermitianMatrix};
use oqcc_core::primitive::compile_schedule;
use oqcc_core::program::{ControlProgram, Instruction};
use oqcc_core::synth::synth_two_outcome;

fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_oqcc"))
}

fn run(args: &[&str]) -> Output {
    run_env(args, &[])
}

fn run_env(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args).env_remove("OQCC_BRANCH_CAP");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf8 stderr")
}

/// Last non-empty stdout line parsed as a JSON report.
fn report(out: &Output) -> serde_json::Value {
    let text = stdout(out);
    let line = text.lines().rev().find(|l| !l.trim().is_empty()).expect("report line");
    serde_json::from_str(line).expect("report parses")
}

fn write_state(path: &Path, diag: &[f64]) {
    let d = diag.len();
    let m = CMat::from_fn(d, d, |r, c| {
        if r == c { C64::new(diag[r], 0.0) } else { C64::new(0.0, 0.0) }
    });
    files::write_matrix(path, &m).expect("state written");
}

fn damping_channel() -> KrausChannel {
    KrausChannel::amplitude_damping(0.36).expect("valid channel")
}

/// n consecutive measurements with the projector on |1⟩ as averaged
/// generator; branch enumeration fans out to 2^n records.
fn measure_chain(n: usize, gamma_t: f64) -> ControlProgram {
    let xbar = HermitianMatrix::new(CMat::from_fn(2, 2, |r, c| {
        if r == 1 && c == 1 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
    }))
    .expect("valid target");
    let schedule = compile_schedule(&xbar, 1.0).expect("schedule compiles");
    let body =
        vec![Instruction::YesNoMeasure { gamma_t, schedule }; n];
    ControlProgram::new(2, body).expect("valid program")
}

fn frobenius_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm()
}

#[test]
fn compile_damping_target_reports_small_distance() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.json");
    let out = dir.path().join("prog.json");
    files::write_channel(&target, &damping_channel()).unwrap();

    let r = run(&[
        "--quiet",
        "compile",
        "--target",
        target.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "stderr: {}", stderr(&r));
    let rep = report(&r);
    assert!(rep["distance"].as_f64().unwrap() < 1e-8);
    assert_eq!(rep["branch_count"].as_u64().unwrap(), 2);

    let program = files::read_program(&out).unwrap();
    let kinds: Vec<&str> = program
        .instructions()
        .iter()
        .map(|i| match i {
            Instruction::Unitary(_) => "unitary",
            Instruction::YesNoMeasure { .. } => "measure",
            Instruction::Branch { .. } => "branch",
            Instruction::Repeat { .. } => "repeat",
        })
        .collect();
    assert_eq!(kinds, ["measure", "branch"]);
}

#[test]
fn compile_identity_target_emits_no_measurements() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.json");
    let out = dir.path().join("prog.json");
    files::write_channel(&target, &KrausChannel::identity(2)).unwrap();

    let r = run(&[
        "--quiet",
        "compile",
        "--target",
        target.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "stderr: {}", stderr(&r));
    let program = files::read_program(&out).unwrap();
    assert!(program
        .instructions()
        .iter()
        .all(|i| matches!(i, Instruction::Unitary(_))));
    assert_eq!(report(&r)["step_count"].as_u64().unwrap(), 1);
}

#[test]
fn compile_generator_over_coupling_window_exits_3_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen.json");
    let out = dir.path().join("prog.json");
    let zero = CMat::zeros(2, 2);
    let h = HermitianMatrix::new(zero.clone()).unwrap();
    let l = CMat::from_fn(2, 2, |r, c| {
        if r == 0 && c == 1 { C64::new(4.0, 0.0) } else { C64::new(0.0, 0.0) }
    });
    let g = CanonicalGenerator::new(h, vec![l]).unwrap();
    let file = files::GeneratorFile {
        dim: 2,
        h: files::matrix_file(&zero),
        form: "canonical".into(),
        lindblad: Some(g.ops().iter().map(files::matrix_file).collect()),
        a: None,
        basis: None,
    };
    std::fs::write(&gen, serde_json::to_string(&file).unwrap()).unwrap();

    let r = run(&[
        "--quiet",
        "compile",
        "--generator",
        gen.to_str().unwrap(),
        "--time",
        "1.0",
        "--steps",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 3);
    assert!(stderr(&r).contains("increase --steps"), "stderr: {}", stderr(&r));

    let ok = run(&[
        "--quiet",
        "compile",
        "--generator",
        gen.to_str().unwrap(),
        "--time",
        "1.0",
        "--steps",
        "64",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&ok), 0, "stderr: {}", stderr(&ok));
}

#[test]
fn simulate_gate_program_flips_basis_state() {
    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("prog.json");
    let state = dir.path().join("state.json");
    let out = dir.path().join("out.json");
    let sx = CMat::from_fn(2, 2, |r, c| {
        if r != c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
    });
    let program = ControlProgram::new(2, vec![Instruction::Unitary(sx)]).unwrap();
    files::write_program(&prog, &program).unwrap();
    write_state(&state, &[1.0, 0.0]);

    let r = run(&[
        "--quiet",
        "simulate",
        "--program",
        prog.to_str().unwrap(),
        "--state",
        state.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "stderr: {}", stderr(&r));
    assert_eq!(report(&r)["mode"], "branch-sum");

    let got = files::read_matrix(&out).unwrap();
    let want = CMat::from_fn(2, 2, |r, c| {
        if r == 1 && c == 1 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
    });
    assert!(frobenius_diff(&got, &want) < 1e-14);
}

#[test]
fn simulate_damping_program_matches_kraus_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("prog.json");
    let state = dir.path().join("state.json");
    let out = dir.path().join("out.json");
    let program = synth_two_outcome(&damping_channel()).unwrap();
    files::write_program(&prog, &program).unwrap();
    write_state(&state, &[0.0, 1.0]);

    let r = run(&[
        "--quiet",
        "simulate",
        "--program",
        prog.to_str().unwrap(),
        "--state",
        state.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "stderr: {}", stderr(&r));

    let got = files::read_matrix(&out).unwrap();
    let want = CMat::from_fn(2, 2, |r, c| match (r, c) {
        (0, 0) => C64::new(0.36, 0.0),
        (1, 1) => C64::new(0.64, 0.0),
        _ => C64::new(0.0, 0.0),
    });
    assert!(frobenius_diff(&got, &want) < 1e-8);
}

#[test]
fn simulate_trajectories_reproducible_and_near_branch_sum() {
    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("prog.json");
    let state = dir.path().join("state.json");
    files::write_program(&prog, &synth_two_outcome(&damping_channel()).unwrap()).unwrap();
    write_state(&state, &[0.3, 0.7]);

    let exact_out = dir.path().join("exact.json");
    let r = run(&[
        "--quiet",
        "simulate",
        "--program",
        prog.to_str().unwrap(),
        "--state",
        state.to_str().unwrap(),
        "--out",
        exact_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0);
    let exact = files::read_matrix(&exact_out).unwrap();

    let run_traj = |tag: &str| {
        let out = dir.path().join(format!("traj-{tag}.json"));
        let r = run(&[
            "--quiet",
            "simulate",
            "--program",
            prog.to_str().unwrap(),
            "--state",
            state.to_str().unwrap(),
            "--trajectories",
            "100000",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&r), 0, "stderr: {}", stderr(&r));
        (stdout(&r), std::fs::read(&out).unwrap())
    };
    let (stdout_a, bytes_a) = run_traj("a");
    let (stdout_b, bytes_b) = run_traj("b");
    assert_eq!(stdout_a, stdout_b);
    assert_eq!(bytes_a, bytes_b);

    let rep: serde_json::Value = serde_json::from_str(stdout_a.trim()).unwrap();
    assert_eq!(rep["mode"], "trajectories");
    assert_eq!(rep["seed"].as_u64().unwrap(), 7);
    let se = rep["std_error"].as_f64().unwrap();
    let mean: CMat = files::matrix_from(
        &serde_json::from_slice::<files::MatrixFile>(&bytes_a).unwrap(),
    )
    .unwrap();
    assert!(frobenius_diff(&mean, &exact) <= 5.0 * se + 1e-12);
}

#[test]
fn verify_compiled_program_passes() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.json");
    let prog = dir.path().join("prog.json");
    files::write_channel(&target, &damping_channel()).unwrap();
    files::write_program(&prog, &synth_two_outcome(&damping_channel()).unwrap()).unwrap();

    let r = run(&[
        "--quiet",
        "verify",
        "--program",
        prog.to_str().unwrap(),
        "--target",
        target.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "stderr: {}", stderr(&r));
    let rep = report(&r);
    assert_eq!(rep["pass"], true);
    assert!(rep["distance"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn verify_identity_program_against_depolarizing_fails_with_known_distance() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.json");
    let prog = dir.path().join("prog.json");
    files::write_channel(&target, &KrausChannel::depolarizing(2, 1.0).unwrap()).unwrap();
    files::write_program(&prog, &ControlProgram::empty(2).unwrap()).unwrap();

    let r = run(&[
        "--quiet",
        "verify",
        "--program",
        prog.to_str().unwrap(),
        "--target",
        target.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 1);
    let rep = report(&r);
    assert_eq!(rep["pass"], false);
    let distance = rep["distance"].as_f64().unwrap();
    assert!((distance - 0.8660254037844386).abs() < 1e-12, "distance {distance}");
}

#[test]
fn malformed_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.json");
    let bad = dir.path().join("bad.json");
    files::write_channel(&target, &damping_channel()).unwrap();
    std::fs::write(&bad, "{not json").unwrap();

    let r = run(&[
        "--quiet",
        "verify",
        "--program",
        bad.to_str().unwrap(),
        "--target",
        target.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("bad.json"));

    std::fs::write(&bad, r#"{"rows": 2, "cols": 2, "data": [[1.0, 0.0]]}"#).unwrap();
    let r = run(&[
        "--quiet",
        "simulate",
        "--program",
        bad.to_str().unwrap(),
        "--state",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("out.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 2);
}

#[test]
fn lindblad_sweep_fits_inverse_slope() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen.json");
    let state = dir.path().join("state.json");
    let zero = CMat::zeros(2, 2);
    let l = CMat::from_fn(2, 2, |r, c| {
        if r == 0 && c == 1 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
    });
    let file = files::GeneratorFile {
        dim: 2,
        h: files::matrix_file(&zero),
        form: "canonical".into(),
        lindblad: Some(vec![files::matrix_file(&l)]),
        a: None,
        basis: None,
    };
    std::fs::write(&gen, serde_json::to_string(&file).unwrap()).unwrap();
    write_state(&state, &[0.5, 0.5]);

    let r = run(&[
        "--quiet",
        "lindblad",
        "--generator",
        gen.to_str().unwrap(),
        "--time",
        "1.0",
        "--steps-list",
        "8,16,32,64",
        "--state",
        state.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "stderr: {}", stderr(&r));
    let rep = report(&r);
    let slope = rep["slope"].as_f64().unwrap();
    assert!((-1.2..=-0.8).contains(&slope), "slope {slope}");
    let errs: Vec<f64> = rep["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["channel_error"].as_f64().unwrap())
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "not decreasing: {errs:?}");

    let r = run(&[
        "--quiet",
        "lindblad",
        "--generator",
        gen.to_str().unwrap(),
        "--time",
        "1.0",
        "--steps-list",
        "64,32",
        "--state",
        state.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("ascending"));
}

#[test]
fn lindblad_hamiltonian_only_errors_at_floor() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen.json");
    let state = dir.path().join("state.json");
    let h = CMat::from_fn(2, 2, |r, c| {
        if r == c {
            C64::new(if r == 0 { 1.0 } else { -1.0 }, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let file = files::GeneratorFile {
        dim: 2,
        h: files::matrix_file(&h),
        form: "canonical".into(),
        lindblad: Some(Vec::new()),
        a: None,
        basis: None,
    };
    std::fs::write(&gen, serde_json::to_string(&file).unwrap()).unwrap();
    write_state(&state, &[0.5, 0.5]);

    let r = run(&[
        "--quiet",
        "lindblad",
        "--generator",
        gen.to_str().unwrap(),
        "--time",
        "1.0",
        "--steps-list",
        "1,2,4",
        "--state",
        state.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "stderr: {}", stderr(&r));
    for e in report(&r)["entries"].as_array().unwrap() {
        assert!(e["channel_error"].as_f64().unwrap() < 1e-10);
        assert!(e["state_error"].as_f64().unwrap() < 1e-10);
    }
}

#[test]
fn lindblad_zero_generator_is_exact_identity() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen.json");
    let state = dir.path().join("state.json");
    let zero = CMat::zeros(2, 2);
    let file = files::GeneratorFile {
        dim: 2,
        h: files::matrix_file(&zero),
        form: "canonical".into(),
        lindblad: Some(Vec::new()),
        a: None,
        basis: None,
    };
    std::fs::write(&gen, serde_json::to_string(&file).unwrap()).unwrap();
    write_state(&state, &[0.25, 0.75]);

    let r = run(&[
        "--quiet",
        "lindblad",
        "--generator",
        gen.to_str().unwrap(),
        "--time",
        "3.5",
        "--steps-list",
        "1,4,16",
        "--state",
        state.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "stderr: {}", stderr(&r));
    for e in report(&r)["entries"].as_array().unwrap() {
        assert!(e["channel_error"].as_f64().unwrap() < 1e-12);
    }
}

#[test]
fn branch_cap_env_gates_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("prog.json");
    let state = dir.path().join("state.json");
    let out = dir.path().join("out.json");
    files::write_program(&prog, &measure_chain(3, 0.3)).unwrap();
    write_state(&state, &[0.5, 0.5]);
    let args = [
        "--quiet",
        "simulate",
        "--program",
        prog.to_str().unwrap(),
        "--state",
        state.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];

    let capped = run_env(&args, &[("OQCC_BRANCH_CAP", "4")]);
    assert_eq!(code(&capped), 4);
    assert!(stderr(&capped).contains("--trajectories"), "stderr: {}", stderr(&capped));

    let free = run(&args);
    assert_eq!(code(&free), 0, "stderr: {}", stderr(&free));
    assert_eq!(report(&free)["branches"].as_u64().unwrap(), 8);

    let junk = run_env(&args, &[("OQCC_BRANCH_CAP", "banana")]);
    assert_eq!(code(&junk), 2);
}

#[cfg(target_os = "linux")]
#[test]
fn unwritable_stdout_does_not_panic_or_change_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.json");
    let prog = dir.path().join("prog.json");
    files::write_channel(&target, &damping_channel()).unwrap();
    files::write_program(&prog, &synth_two_outcome(&damping_channel()).unwrap()).unwrap();

    let out = Command::new(bin())
        .args([
            "verify",
            "--program",
            prog.to_str().unwrap(),
            "--target",
            target.to_str().unwrap(),
        ])
        .stdout(std::fs::File::create("/dev/full").unwrap())
        .output()
        .expect("binary runs");
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(!stderr(&out).contains("panicked"), "stderr: {}", stderr(&out));
}

#[test]
fn banner_and_quiet_stdout_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.json");
    let out = dir.path().join("prog.json");
    files::write_channel(&target, &damping_channel()).unwrap();
    let args = |quiet: bool| {
        let mut v = Vec::new();
        if quiet {
            v.push("--quiet");
        }
        v.extend([
            "compile",
            "--target",
            target.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        v
    };

    let loud = run(&args(false));
    assert!(stdout(&loud).lines().next().unwrap().starts_with("oqcc "));

    let a = run(&args(true));
    let b = run(&args(true));
    assert_eq!(code(&a), 0);
    assert_eq!(stdout(&a), stdout(&b));
    assert!(!stdout(&a).contains("oqcc "));
}
