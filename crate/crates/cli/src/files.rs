//! On-disk JSON formats and their conversions to the core domain types.
//!
//! All formats are strict: unknown fields are rejected, every matrix entry
//! must be finite, and parsing runs the full domain validation so that a file
//! that parses is a file that executes. Numbers are emitted in shortest
//! round-trip decimal form, so emit∘parse∘emit is byte-stable.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use oqcc_core::channel::{DensityMatrix, KrausChannel};
use oqcc_core::lindblad::{canonicalize, CanonicalGenerator, GKSGenerator, OperatorBasis, TraceSplit};
use oqcc_core::linalg::{C64, CMat, HermitianMatrix};
use oqcc_core::primitive::{AveragingSchedule, ScheduleSegment};
use oqcc_core::program::{ControlProgram, Instruction};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: {detail}", path.display())]
    Invalid { path: PathBuf, detail: String },
}

/// Dense complex matrix: row-major [re, im] pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

/// Kraus family acting on a `dim`-dimensional system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFile {
    pub dim: usize,
    pub kraus: Vec<MatrixFile>,
}

/// Markovian generator, in operator ("canonical") or matrix ("gks") form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorFile {
    pub dim: usize,
    #[serde(rename = "H")]
    pub h: MatrixFile,
    pub form: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lindblad: Option<Vec<MatrixFile>>,
    #[serde(rename = "A", skip_serializing_if = "Option::is_none")]
    pub a: Option<MatrixFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<String>,
}

/// Validated instruction tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramFile {
    pub dim: usize,
    pub instructions: Vec<InstructionNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleNode {
    pub segments: Vec<SegmentNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentNode {
    pub frame: MatrixFile,
    pub duration: f64,
}

/// One instruction, discriminated by a "type" string.
///
/// Deserialization is hand-written because serde does not support
/// `deny_unknown_fields` on internally tagged enums; each arm funnels the
/// value through a strict per-variant struct instead.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum InstructionNode {
    Unitary {
        matrix: MatrixFile,
    },
    Measure {
        gamma_t: f64,
        schedule: ScheduleNode,
    },
    Branch {
        on0: Vec<InstructionNode>,
        on1: Vec<InstructionNode>,
    },
    Repeat {
        count: u64,
        body: Vec<InstructionNode>,
    },
}

impl<'de> Deserialize<'de> for InstructionNode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        let tag = value
            .get("type")
            .and_then(|t| t.as_str())
            .ok_or_else(|| D::Error::custom("instruction needs a string \"type\" field"))?
            .to_owned();
        match tag.as_str() {
            "unitary" => {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct Node {
                    #[serde(rename = "type")]
                    _type: String,
                    matrix: MatrixFile,
                }
                let n: Node = serde_json::from_value(value).map_err(D::Error::custom)?;
                Ok(InstructionNode::Unitary { matrix: n.matrix })
            }
            "measure" => {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct Node {
                    #[serde(rename = "type")]
                    _type: String,
                    gamma_t: f64,
                    schedule: ScheduleNode,
                }
                let n: Node = serde_json::from_value(value).map_err(D::Error::custom)?;
                Ok(InstructionNode::Measure { gamma_t: n.gamma_t, schedule: n.schedule })
            }
            "branch" => {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct Node {
                    #[serde(rename = "type")]
                    _type: String,
                    on0: Vec<InstructionNode>,
                    on1: Vec<InstructionNode>,
                }
                let n: Node = serde_json::from_value(value).map_err(D::Error::custom)?;
                Ok(InstructionNode::Branch { on0: n.on0, on1: n.on1 })
            }
            "repeat" => {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct Node {
                    #[serde(rename = "type")]
                    _type: String,
                    count: u64,
                    body: Vec<InstructionNode>,
                }
                let n: Node = serde_json::from_value(value).map_err(D::Error::custom)?;
                Ok(InstructionNode::Repeat { count: n.count, body: n.body })
            }
            other => Err(D::Error::custom(format!("unknown instruction type {other:?}"))),
        }
    }
}

// ---- pure converters ------------------------------------------------------

pub fn matrix_file(m: &CMat) -> MatrixFile {
    let mut data = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            data.push([z.re, z.im]);
        }
    }
    MatrixFile { rows: m.nrows(), cols: m.ncols(), data }
}

pub fn matrix_from(f: &MatrixFile) -> Result<CMat, String> {
    if f.rows == 0 || f.cols == 0 {
        return Err("matrix must have at least one row and column".into());
    }
    if f.data.len() != f.rows * f.cols {
        return Err(format!(
            "matrix data has {} entries, expected {}×{} = {}",
            f.data.len(),
            f.rows,
            f.cols,
            f.rows * f.cols
        ));
    }
    if f.data.iter().flatten().any(|x| !x.is_finite()) {
        return Err("matrix entries must be finite".into());
    }
    Ok(CMat::from_fn(f.rows, f.cols, |r, c| {
        let [re, im] = f.data[r * f.cols + c];
        C64::new(re, im)
    }))
}

pub fn channel_file(ch: &KrausChannel) -> ChannelFile {
    ChannelFile { dim: ch.dim_in(), kraus: ch.ops().iter().map(matrix_file).collect() }
}

pub fn channel_from(f: &ChannelFile) -> Result<KrausChannel, String> {
    let mut ops = Vec::with_capacity(f.kraus.len());
    for (k, mf) in f.kraus.iter().enumerate() {
        if mf.rows != f.dim || mf.cols != f.dim {
            return Err(format!(
                "kraus[{k}] is {}×{}, expected {}×{}",
                mf.rows, mf.cols, f.dim, f.dim
            ));
        }
        ops.push(matrix_from(mf).map_err(|e| format!("kraus[{k}]: {e}"))?);
    }
    KrausChannel::new(ops).map_err(|e| e.to_string())
}

/// Parse a generator file into canonical form. Canonical inputs with traceful
/// jump operators are split exactly (identity part folded into H); the split
/// records are returned for the caller to report. GKS inputs are restricted
/// to the generalized Gell-Mann basis.
pub fn generator_from(f: &GeneratorFile) -> Result<(CanonicalGenerator, Vec<TraceSplit>), String> {
    let check_dim = |mf: &MatrixFile, what: &str, rows: usize, cols: usize| {
        if mf.rows != rows || mf.cols != cols {
            Err(format!("{what} is {}×{}, expected {rows}×{cols}", mf.rows, mf.cols))
        } else {
            Ok(())
        }
    };
    check_dim(&f.h, "H", f.dim, f.dim)?;
    let h = HermitianMatrix::new(matrix_from(&f.h).map_err(|e| format!("H: {e}"))?)
        .map_err(|e| format!("H: {e}"))?;
    match f.form.as_str() {
        "canonical" => {
            if f.a.is_some() || f.basis.is_some() {
                return Err("canonical form does not take \"A\" or \"basis\"".into());
            }
            let files = f.lindblad.as_ref().ok_or("canonical form needs \"lindblad\"")?;
            let mut ops = Vec::with_capacity(files.len());
            for (k, mf) in files.iter().enumerate() {
                check_dim(mf, &format!("lindblad[{k}]"), f.dim, f.dim)?;
                ops.push(matrix_from(mf).map_err(|e| format!("lindblad[{k}]: {e}"))?);
            }
            CanonicalGenerator::with_trace_split(h, ops).map_err(|e| e.to_string())
        }
        "gks" => {
            if f.lindblad.is_some() {
                return Err("gks form does not take \"lindblad\"".into());
            }
            match f.basis.as_deref() {
                Some("gellmann") => {}
                Some(other) => return Err(format!("unsupported basis {other:?} (only \"gellmann\")")),
                None => return Err("gks form needs \"basis\": \"gellmann\"".into()),
            }
            let af = f.a.as_ref().ok_or("gks form needs \"A\"")?;
            let n = f.dim * f.dim - 1;
            check_dim(af, "A", n, n)?;
            let a = HermitianMatrix::new(matrix_from(af).map_err(|e| format!("A: {e}"))?)
                .map_err(|e| format!("A: {e}"))?;
            let basis = OperatorBasis::gell_mann(f.dim).map_err(|e| e.to_string())?;
            let gks = GKSGenerator::new(h, basis, a).map_err(|e| e.to_string())?;
            let g = canonicalize(&gks).map_err(|e| e.to_string())?;
            Ok((g, Vec::new()))
        }
        other => Err(format!("unknown generator form {other:?}")),
    }
}

pub fn program_file(p: &ControlProgram) -> ProgramFile {
    ProgramFile { dim: p.dim(), instructions: instruction_nodes(p.instructions()) }
}

fn instruction_nodes(instrs: &[Instruction]) -> Vec<InstructionNode> {
    instrs
        .iter()
        .map(|ins| match ins {
            Instruction::Unitary(u) => InstructionNode::Unitary { matrix: matrix_file(u) },
            Instruction::YesNoMeasure { gamma_t, schedule } => InstructionNode::Measure {
                gamma_t: *gamma_t,
                schedule: ScheduleNode {
                    segments: schedule
                        .segments()
                        .iter()
                        .map(|s| SegmentNode {
                            frame: matrix_file(&s.frame),
                            duration: s.duration,
                        })
                        .collect(),
                },
            },
            Instruction::Branch { on0, on1 } => InstructionNode::Branch {
                on0: instruction_nodes(on0.instructions()),
                on1: instruction_nodes(on1.instructions()),
            },
            Instruction::Repeat { count, body } => InstructionNode::Repeat {
                count: *count,
                body: instruction_nodes(body.instructions()),
            },
        })
        .collect()
}

pub fn program_from(f: &ProgramFile) -> Result<ControlProgram, String> {
    let instrs = instructions_from(f.dim, &f.instructions)?;
    ControlProgram::new(f.dim, instrs).map_err(|e| e.to_string())
}

fn instructions_from(d: usize, nodes: &[InstructionNode]) -> Result<Vec<Instruction>, String> {
    nodes
        .iter()
        .map(|node| match node {
            InstructionNode::Unitary { matrix } => {
                Ok(Instruction::Unitary(matrix_from(matrix)?))
            }
            InstructionNode::Measure { gamma_t, schedule } => {
                let segments = schedule
                    .segments
                    .iter()
                    .map(|s| {
                        Ok(ScheduleSegment {
                            frame: matrix_from(&s.frame)?,
                            duration: s.duration,
                        })
                    })
                    .collect::<Result<Vec<_>, String>>()?;
                let schedule = AveragingSchedule::new(segments).map_err(|e| e.to_string())?;
                Ok(Instruction::YesNoMeasure { gamma_t: *gamma_t, schedule })
            }
            InstructionNode::Branch { on0, on1 } => {
                let p0 = ControlProgram::new(d, instructions_from(d, on0)?)
                    .map_err(|e| e.to_string())?;
                let p1 = ControlProgram::new(d, instructions_from(d, on1)?)
                    .map_err(|e| e.to_string())?;
                Ok(Instruction::Branch { on0: p0, on1: p1 })
            }
            InstructionNode::Repeat { count, body } => {
                let b = ControlProgram::new(d, instructions_from(d, body)?)
                    .map_err(|e| e.to_string())?;
                Ok(Instruction::Repeat { count: *count, body: b })
            }
        })
        .collect()
}

// ---- file I/O --------------------------------------------------------------

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.to_owned(), source }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> FormatError + '_ {
    move |source| FormatError::Json { path: path.to_owned(), source }
}

fn invalid(path: &Path, detail: String) -> FormatError {
    FormatError::Invalid { path: path.to_owned(), detail }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let text = serde_json::to_string(value).map_err(json_err(path))?;
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_matrix(path: &Path) -> Result<CMat, FormatError> {
    let f: MatrixFile = read_json(path)?;
    matrix_from(&f).map_err(|d| invalid(path, d))
}

pub fn read_state(path: &Path) -> Result<DensityMatrix, FormatError> {
    let m = read_matrix(path)?;
    DensityMatrix::new(m).map_err(|e| invalid(path, e.to_string()))
}

pub fn write_matrix(path: &Path, m: &CMat) -> Result<(), FormatError> {
    write_json(path, &matrix_file(m))
}

pub fn read_channel(path: &Path) -> Result<KrausChannel, FormatError> {
    let f: ChannelFile = read_json(path)?;
    channel_from(&f).map_err(|d| invalid(path, d))
}

pub fn write_channel(path: &Path, ch: &KrausChannel) -> Result<(), FormatError> {
    write_json(path, &channel_file(ch))
}

pub fn read_generator(path: &Path) -> Result<(CanonicalGenerator, Vec<TraceSplit>), FormatError> {
    let f: GeneratorFile = read_json(path)?;
    generator_from(&f).map_err(|d| invalid(path, d))
}

pub fn read_program(path: &Path) -> Result<ControlProgram, FormatError> {
    let f: ProgramFile = read_json(path)?;
    program_from(&f).map_err(|d| invalid(path, d))
}

pub fn write_program(path: &Path, p: &ControlProgram) -> Result<(), FormatError> {
    write_json(path, &program_file(p))
}
