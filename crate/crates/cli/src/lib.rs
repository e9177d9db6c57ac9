//! Command-line front end for `mlylab`.
//!
//! [`run`] parses arguments, executes one subcommand and returns the process
//! exit code. Every data file embeds the tool version and the resolved
//! configuration; nothing time-dependent is written.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use mlylab::cesaro::{self, CheckpointRule};
use mlylab::classify::{self, Thresholds};
use mlylab::manifold::{self, Budgets, ManifoldError};
use mlylab::schedules::{self, cubic_schedule, factorial_schedule};
use mlylab::shiftlab;
use mlylab::{
    BlockSchedule, OperatorKind, OperatorSequenceSpec, Scalar, Space, Vector, WeightSequence,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_OVERFLOW: i32 = 3;
pub const EXIT_SEARCH_EXHAUSTED: i32 = 4;
pub const EXIT_NO_SENSITIVITY: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] mlylab::Error),
    #[error("manifold search exhausted at level {0}; partial ledger written")]
    SearchExhausted(usize),
    #[error("no mean-sensitivity witness: the manifold construction does not apply")]
    NoSensitivity,
    #[error("{0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) if e.is_overflow() => EXIT_OVERFLOW,
            CliError::Core(mlylab::Error::BeyondSchedule { .. }) => EXIT_OVERFLOW,
            CliError::Core(_) => EXIT_CONFIG,
            CliError::SearchExhausted(_) => EXIT_SEARCH_EXHAUSTED,
            CliError::NoSensitivity => EXIT_NO_SENSITIVITY,
            CliError::Io(_) => EXIT_FAILURE,
        }
    }
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "mlylab",
    version,
    about = "Cesàro-average experiments for operator sequences"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the Cesàro trace of one vector as CSV.
    Trace(TraceArgs),
    /// Classify pairs, vectors or the whole sequence.
    #[command(subcommand)]
    Classify(ClassifyCommand),
    /// Build and verify a finite-depth irregular manifold ledger.
    Manifold(ManifoldArgs),
    /// Weighted backward shift experiments.
    #[command(subcommand)]
    Shift(ShiftCommand),
    /// Dump a block schedule as JSON.
    Schedule(ScheduleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Example {
    /// `O` / `2I` factorial blocks on the real line.
    Factorial,
    /// `O` / `c_{n+1}·I` cubic blocks on the real line.
    Cubic,
    /// `n·I` at `i = 2^n`, `I` elsewhere.
    Power2,
    /// Unweighted backward shift powers on ℓ¹.
    Shift1,
    /// Backward shift powers weighted by the cubic on-values.
    CubicShift,
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    #[arg(long, value_enum)]
    pub example: Option<Example>,
    /// Depth of the example's block schedule.
    #[arg(long)]
    pub depth: Option<u32>,
    /// Custom schedule (as written by `schedule`) acting on the real line.
    #[arg(long)]
    pub schedule_file: Option<PathBuf>,
    #[arg(long)]
    pub horizon: Option<u128>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub eps_dip: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub m_peak: Option<f64>,
    #[arg(long)]
    pub k_growth: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub x: String,
    /// `default`, `all`, `boundaries`, `geometric:R`, `list:N,N,…`, joined with `+`.
    #[arg(long, default_value = "default")]
    pub checkpoints: String,
}

#[derive(Debug, Clone, Args)]
pub struct PairArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
}

#[derive(Debug, Clone, Args)]
pub struct VectorArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    #[arg(long)]
    pub x: String,
}

#[derive(Debug, Clone, Args)]
pub struct SamplesArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    /// Vector literals separated by `;`. Defaults depend on the example.
    #[arg(long)]
    pub samples: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SubmultArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub samples: Option<String>,
    /// Checks every `(i, m)` with `1 ≤ i, m ≤ this`.
    #[arg(long, default_value_t = 12)]
    pub max_index: u128,
}

#[derive(Debug, Clone, Args)]
pub struct CommuteArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub x: String,
    #[arg(long, default_value_t = 2)]
    pub k: u128,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Subcommand)]
pub enum ClassifyCommand {
    Pair(PairArgs),
    Vector(VectorArgs),
    Dichotomy(SamplesArgs),
    Acb(SamplesArgs),
    Submult(SubmultArgs),
    Commute(CommuteArgs),
    Criterion(SamplesArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ManifoldArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    /// Number of levels `D`.
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    /// Anchor literals separated by `;`; defaults to `e_2, …, e_{D+1}`.
    #[arg(long)]
    pub anchors: Option<String>,
    #[arg(long, default_value_t = 50)]
    pub combos: usize,
    #[arg(long)]
    pub burn_in: Option<u128>,
    #[arg(long)]
    pub family_cap: Option<usize>,
    #[arg(long)]
    pub max_directions: Option<usize>,
    #[arg(long)]
    pub gamma_steps: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct LambdaArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// `const:S`, `poly:C0,C1,…`, `periodic:S,S,…`, `cubic[:D]`, `power2`.
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long, default_value_t = 5.0)]
    pub m_peak: f64,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub x: String,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
}

#[derive(Debug, Subcommand)]
pub enum ShiftCommand {
    Lambda(LambdaArgs),
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScheduleArgs {
    #[command(flatten)]
    pub source: SourceArgs,
}

/// A resolved operator sequence with its default horizon.
pub struct Source {
    pub spec: OperatorSequenceSpec,
    pub weights: Option<WeightSequence>,
    pub schedule: Option<BlockSchedule>,
    pub horizon: u128,
}

const SHIFT1_HORIZON: u128 = 1_000_000;
const POWER2_HORIZON: u128 = 1 << 20;

fn unit_weights() -> WeightSequence {
    WeightSequence::Constant(Scalar::ONE)
}

fn cubic_weights(depth: u32) -> Result<WeightSequence, CliError> {
    Ok(WeightSequence::FromBlockSchedule {
        schedule: Box::new(cubic_schedule(depth)?),
        off: Scalar::ZERO,
    })
}

fn shift_source(weights: WeightSequence, horizon: Option<u128>) -> Result<Source, CliError> {
    weights.validate()?;
    let spec = shiftlab::shift_spec(&weights);
    let default = match &weights {
        WeightSequence::FromBlockSchedule { schedule, .. } => schedule.max_index(),
        _ => SHIFT1_HORIZON,
    };
    Ok(Source {
        spec,
        weights: Some(weights),
        schedule: None,
        horizon: horizon.unwrap_or(default),
    })
}

pub fn resolve_source(args: &SourceArgs) -> Result<Source, CliError> {
    if args.depth == Some(0) {
        return Err(config("--depth must be at least 1"));
    }
    let source = match (args.example, &args.schedule_file) {
        (Some(_), Some(_)) => return Err(config("use either --example or --schedule-file")),
        (None, None) => return Err(config("one of --example or --schedule-file is required")),
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
            let schedule = BlockSchedule::from_dump_json(&text)?;
            block_source("custom", schedule)
        }
        (Some(Example::Factorial), None) => {
            block_source("factorial", factorial_schedule(args.depth.unwrap_or(20))?)
        }
        (Some(Example::Cubic), None) => {
            block_source("cubic", cubic_schedule(args.depth.unwrap_or(10))?)
        }
        (Some(Example::Power2), None) => Source {
            spec: schedules::power2_spike_example(),
            weights: Some(WeightSequence::PowerOfTwoSpike),
            schedule: None,
            horizon: POWER2_HORIZON,
        },
        (Some(Example::Shift1), None) => shift_source(unit_weights(), None)?,
        (Some(Example::CubicShift), None) => {
            shift_source(cubic_weights(args.depth.unwrap_or(15))?, None)?
        }
    };
    let horizon = args.horizon.unwrap_or(source.horizon);
    if horizon == 0 {
        return Err(config("--horizon must be at least 1"));
    }
    Ok(Source { horizon, ..source })
}

fn block_source(name: &str, schedule: BlockSchedule) -> Source {
    let depth = schedule.blocks().len() / 2;
    let spec = OperatorSequenceSpec::new(
        format!("{name}(depth={depth})"),
        Space::RealLine,
        OperatorKind::ScalarBlocks(schedule.clone()),
    );
    Source {
        horizon: schedule.max_index(),
        spec,
        weights: None,
        schedule: Some(schedule),
    }
}

pub fn parse_weights(text: &str) -> Result<WeightSequence, CliError> {
    let (head, tail) = text.split_once(':').unwrap_or((text, ""));
    let bad = || config(format!("cannot parse weights '{text}'"));
    let scalars = |s: &str| -> Result<Vec<Scalar>, CliError> {
        s.split(',')
            .map(|v| Scalar::parse(v.trim()).ok_or_else(bad))
            .collect()
    };
    let w = match head {
        "const" => WeightSequence::Constant(Scalar::parse(tail.trim()).ok_or_else(bad)?),
        "poly" => WeightSequence::Polynomial(
            tail.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<_, _>>()?,
        ),
        "periodic" => WeightSequence::Periodic(scalars(tail)?),
        "cubic" => {
            let depth = if tail.is_empty() {
                15
            } else {
                tail.parse().map_err(|_| bad())?
            };
            if depth == 0 {
                return Err(config("cubic weights need depth at least 1"));
            }
            cubic_weights(depth)?
        }
        "power2" => WeightSequence::PowerOfTwoSpike,
        _ => return Err(bad()),
    };
    w.validate()?;
    Ok(w)
}

fn weights_source(args: &SourceArgs, weights: &Option<String>) -> Result<Source, CliError> {
    match weights {
        Some(text) => {
            if args.example.is_some() || args.schedule_file.is_some() {
                return Err(config("--weights replaces --example"));
            }
            shift_source(parse_weights(text)?, args.horizon)
        }
        None => {
            let s = resolve_source(args)?;
            if s.spec.space != Space::EllOne {
                return Err(config("shift commands need --weights or a shift example"));
            }
            Ok(s)
        }
    }
}

pub fn parse_vector(space: Space, literal: &str) -> Result<Vector, CliError> {
    Ok(Vector::parse(space, literal)?)
}

pub fn parse_vectors(space: Space, literals: &str) -> Result<Vec<Vector>, CliError> {
    let vs = literals
        .split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_vector(space, s))
        .collect::<Result<Vec<_>, _>>()?;
    if vs.is_empty() {
        return Err(config("empty vector list"));
    }
    Ok(vs)
}

pub fn parse_checkpoints(text: &str) -> Result<CheckpointRule, CliError> {
    let bad = || config(format!("cannot parse checkpoint rule '{text}'"));
    let mut rules = Vec::new();
    for part in text.split('+') {
        let (head, tail) = part.trim().split_once(':').unwrap_or((part.trim(), ""));
        rules.push(match head {
            "default" => CheckpointRule::default(),
            "all" => CheckpointRule::All,
            "boundaries" => CheckpointRule::BlockBoundaries,
            "geometric" => {
                let r: f64 = tail.parse().map_err(|_| bad())?;
                if !(r.is_finite() && r > 1.0) {
                    return Err(config("geometric ratio must exceed 1"));
                }
                CheckpointRule::Geometric(r)
            }
            "list" => CheckpointRule::Explicit(
                tail.split(',')
                    .map(|v| v.trim().parse::<u128>().map_err(|_| bad()))
                    .collect::<Result<_, _>>()?,
            ),
            _ => return Err(bad()),
        });
    }
    Ok(if rules.len() == 1 {
        rules.pop().expect("one rule")
    } else {
        CheckpointRule::Union(rules)
    })
}

struct Defaults {
    eps_dip: f64,
    delta: f64,
    m_peak: f64,
    k_growth: u32,
}

const CLASSIFY_DEFAULTS: Defaults = Defaults {
    eps_dip: 0.5,
    delta: 1.0,
    m_peak: 5.0,
    k_growth: 4,
};

const MANIFOLD_DEFAULTS: Defaults = Defaults {
    eps_dip: 0.1,
    delta: 0.5,
    m_peak: 0.5,
    k_growth: 1,
};

fn thresholds(args: &ThresholdArgs, d: &Defaults, horizon: u128) -> Result<Thresholds, CliError> {
    Thresholds::new(
        args.eps_dip.unwrap_or(d.eps_dip),
        args.delta.unwrap_or(d.delta),
        args.m_peak.unwrap_or(d.m_peak),
        horizon,
        args.k_growth.unwrap_or(d.k_growth),
    )
    .map_err(|e| config(e.to_string()))
}

/// Resolved configuration echoed into every data file.
#[derive(Debug, Serialize)]
struct RunConfig {
    command: &'static str,
    spec: String,
    example: Option<Example>,
    depth: Option<u32>,
    schedule_file: Option<String>,
    horizon: String,
    seed: u64,
    out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    thresholds: Option<Thresholds>,
    params: Map<String, Value>,
}

impl RunConfig {
    fn new(command: &'static str, args: &SourceArgs, source: &Source) -> Self {
        RunConfig {
            command,
            spec: source.spec.label.clone(),
            example: args.example,
            depth: args.depth,
            schedule_file: args.schedule_file.as_ref().map(|p| p.display().to_string()),
            horizon: source.horizon.to_string(),
            seed: args.seed,
            out: args.out.as_ref().map(|p| p.display().to_string()),
            thresholds: None,
            params: Map::new(),
        }
    }

    fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.params.insert(
            key.to_string(),
            serde_json::to_value(value).expect("serializable parameter"),
        );
        self
    }

    fn thresholds(mut self, t: Thresholds) -> Self {
        self.thresholds = Some(t);
        self
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool_version: &'static str,
    config: &'a RunConfig,
    result: T,
}

fn emit_bytes(out: &Option<PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn envelope_json<T: Serialize>(cfg: &RunConfig, result: T) -> Vec<u8> {
    let env = Envelope {
        tool_version: TOOL_VERSION,
        config: cfg,
        result,
    };
    let mut text = serde_json::to_string_pretty(&env).expect("reports serialize");
    text.push('\n');
    text.into_bytes()
}

fn emit_json<T: Serialize>(
    cfg: &RunConfig,
    out: &Option<PathBuf>,
    result: T,
) -> Result<(), CliError> {
    emit_bytes(out, &envelope_json(cfg, result))
}

/// Sidecar path for CSV metadata: `<out>.meta.json`.
pub fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn cmd_trace(args: &TraceArgs) -> Result<(), CliError> {
    let source = resolve_source(&args.source)?;
    let x = parse_vector(source.spec.space, &args.x)?;
    let rule = parse_checkpoints(&args.checkpoints)?;
    let trace = cesaro::trace(&source.spec, &x, source.horizon, &rule)?;
    let cfg = RunConfig::new("trace", &args.source, &source)
        .param("x", x.to_string())
        .param("checkpoints", &rule);
    emit_bytes(&args.source.out, trace.to_csv().as_bytes())?;
    if let Some(out) = &args.source.out {
        let meta = json!({
            "rows": trace.checkpoints.len(),
            "exact": trace.exact,
            "xnorm": trace.xnorm,
            "columns": ["n", "S", "A"],
        });
        fs::write(meta_path(out), envelope_json(&cfg, meta))?;
    }
    Ok(())
}

fn samples_or_default(source: &Source, samples: &Option<String>) -> Result<Vec<Vector>, CliError> {
    match samples {
        Some(s) => parse_vectors(source.spec.space, s),
        None => Ok(classify::default_samples(&source.spec, source.horizon)?),
    }
}

fn literals(vs: &[Vector]) -> Vec<String> {
    vs.iter().map(|v| v.to_string()).collect()
}

fn cmd_classify(cmd: &ClassifyCommand) -> Result<(), CliError> {
    match cmd {
        ClassifyCommand::Pair(a) => {
            let source = resolve_source(&a.source)?;
            let t = thresholds(&a.thresholds, &CLASSIFY_DEFAULTS, source.horizon)?;
            let x = parse_vector(source.spec.space, &a.x)?;
            let y = parse_vector(source.spec.space, &a.y)?;
            let mut report = classify::classify_pair(&source.spec, &x, &y, &t)?;
            report.seed = a.source.seed;
            let cfg = RunConfig::new("classify pair", &a.source, &source)
                .thresholds(t)
                .param("x", x.to_string())
                .param("y", y.to_string());
            emit_json(&cfg, &a.source.out, report)
        }
        ClassifyCommand::Vector(a) => {
            let source = resolve_source(&a.source)?;
            let t = thresholds(&a.thresholds, &CLASSIFY_DEFAULTS, source.horizon)?;
            let x = parse_vector(source.spec.space, &a.x)?;
            let mut report = classify::detect_irregular_vector(&source.spec, &x, &t)?;
            report.seed = a.source.seed;
            let cfg = RunConfig::new("classify vector", &a.source, &source)
                .thresholds(t)
                .param("x", x.to_string());
            emit_json(&cfg, &a.source.out, report)
        }
        ClassifyCommand::Dichotomy(a) => {
            let source = resolve_source(&a.source)?;
            let t = thresholds(&a.thresholds, &CLASSIFY_DEFAULTS, source.horizon)?;
            let samples = samples_or_default(&source, &a.samples)?;
            let mut report = classify::dichotomy_report(&source.spec, &samples, &t)?;
            report.seed = a.source.seed;
            let cfg = RunConfig::new("classify dichotomy", &a.source, &source)
                .thresholds(t)
                .param("samples", literals(&samples));
            emit_json(&cfg, &a.source.out, report)
        }
        ClassifyCommand::Acb(a) => {
            let source = resolve_source(&a.source)?;
            let samples = samples_or_default(&source, &a.samples)?;
            let est = classify::estimate_acb_constant(&source.spec, &samples, source.horizon)?;
            let cfg = RunConfig::new("classify acb", &a.source, &source)
                .param("samples", literals(&samples));
            let sample = samples[est.sample].to_string();
            emit_json(
                &cfg,
                &a.source.out,
                json!({ "estimate": est, "sample_vector": sample }),
            )
        }
        ClassifyCommand::Submult(a) => {
            let source = resolve_source(&a.source)?;
            let samples = samples_or_default(&source, &a.samples)?;
            if a.max_index == 0 {
                return Err(config("--max-index must be at least 1"));
            }
            let pairs: Vec<(u128, u128)> = (1..=a.max_index)
                .flat_map(|i| (1..=a.max_index).map(move |m| (i, m)))
                .collect();
            let result = classify::check_submultiplicative(&source.spec, &samples, &pairs)?;
            let cfg = RunConfig::new("classify submult", &a.source, &source)
                .param("samples", literals(&samples))
                .param("max_index", a.max_index.to_string());
            emit_json(&cfg, &a.source.out, result)
        }
        ClassifyCommand::Commute(a) => {
            let source = resolve_source(&a.source)?;
            let x = parse_vector(source.spec.space, &a.x)?;
            let profile =
                classify::check_almost_commuting(&source.spec, &x, a.k, source.horizon, a.tol)?;
            let cfg = RunConfig::new("classify commute", &a.source, &source)
                .param("x", x.to_string())
                .param("k", a.k.to_string())
                .param("tol", a.tol);
            emit_json(&cfg, &a.source.out, profile)
        }
        ClassifyCommand::Criterion(a) => {
            let source = resolve_source(&a.source)?;
            let t = thresholds(&a.thresholds, &CLASSIFY_DEFAULTS, source.horizon)?;
            let x0 = samples_or_default(&source, &a.samples)?;
            let report = classify::mly_criterion_check(&source.spec, &x0, &t, a.source.seed)?;
            let cfg = RunConfig::new("classify criterion", &a.source, &source)
                .thresholds(t)
                .param("samples", literals(&x0));
            emit_json(&cfg, &a.source.out, report)
        }
    }
}

fn cmd_manifold(a: &ManifoldArgs) -> Result<(), CliError> {
    if a.levels == 0 {
        return Err(config("--levels must be at least 1"));
    }
    let source = resolve_source(&a.source)?;
    let t = thresholds(&a.thresholds, &MANIFOLD_DEFAULTS, source.horizon)?;
    let anchors = match &a.anchors {
        Some(s) => parse_vectors(source.spec.space, s)?,
        None => (2..=a.levels as u128 + 1)
            .map(|j| Vector::basis(source.spec.space, j))
            .collect::<Result<_, _>>()?,
    };
    let d = Budgets::default();
    let budgets = Budgets {
        max_directions: a.max_directions.unwrap_or(d.max_directions),
        gamma_steps: a.gamma_steps.unwrap_or(d.gamma_steps),
        burn_in: a.burn_in.unwrap_or(d.burn_in),
        family_cap: a.family_cap.unwrap_or(d.family_cap),
    };
    let cfg = RunConfig::new("manifold", &a.source, &source)
        .thresholds(t)
        .param("levels", a.levels)
        .param("anchors", literals(&anchors))
        .param("combos", a.combos)
        .param("budgets", budgets);
    let seed = a.source.seed;
    match manifold::build_irregular_manifold(
        &source.spec,
        &anchors,
        a.levels,
        &t,
        &budgets,
        None,
        seed,
    ) {
        Ok(ledger) => {
            let verification =
                manifold::verify_span_irregular(&source.spec, &ledger, a.combos, &t, seed)?;
            emit_json(
                &cfg,
                &a.source.out,
                json!({ "ledger": ledger, "verification": verification }),
            )
        }
        Err(ManifoldError::SearchExhausted { level, partial }) => {
            emit_json(
                &cfg,
                &a.source.out,
                json!({ "ledger": partial, "verification": null }),
            )?;
            Err(CliError::SearchExhausted(level))
        }
        Err(ManifoldError::NoSensitivity) => Err(CliError::NoSensitivity),
        Err(ManifoldError::Core(e)) => Err(e.into()),
    }
}

fn cmd_shift(cmd: &ShiftCommand) -> Result<(), CliError> {
    match cmd {
        ShiftCommand::Lambda(a) => {
            let source = weights_source(&a.source, &a.weights)?;
            let weights = source.weights.clone().expect("shift sources carry weights");
            let profile = shiftlab::lambda_criterion(&weights, source.horizon, a.m_peak)?;
            let cfg = RunConfig::new("shift lambda", &a.source, &source)
                .param("weights", &weights)
                .param("m_peak", a.m_peak);
            emit_json(&cfg, &a.source.out, profile)
        }
        ShiftCommand::Verify(a) => {
            let source = weights_source(&a.source, &a.weights)?;
            let weights = source.weights.clone().expect("shift sources carry weights");
            let x = parse_vector(Space::EllOne, &a.x)?;
            let report =
                shiftlab::verify_bounded_implies_vanishing(&weights, &x, a.eps, source.horizon)?;
            let cfg = RunConfig::new("shift verify", &a.source, &source)
                .param("weights", &weights)
                .param("x", x.to_string())
                .param("eps", a.eps);
            emit_json(&cfg, &a.source.out, report)
        }
    }
}

fn cmd_schedule(a: &ScheduleArgs) -> Result<(), CliError> {
    let source = resolve_source(&a.source)?;
    let schedule = match (&source.schedule, &source.weights) {
        (Some(s), _) => s.clone(),
        (None, Some(WeightSequence::FromBlockSchedule { schedule, .. })) => (**schedule).clone(),
        _ => return Err(config("this example has no block schedule")),
    };
    let mut text = schedule.to_dump_json();
    text.push('\n');
    emit_bytes(&a.source.out, text.as_bytes())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Trace(a) => cmd_trace(a),
        Command::Classify(c) => cmd_classify(c),
        Command::Manifold(a) => cmd_manifold(a),
        Command::Shift(c) => cmd_shift(c),
        Command::Schedule(a) => cmd_schedule(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_rules() {
        assert_eq!(parse_checkpoints("all").unwrap(), CheckpointRule::All);
        assert_eq!(
            parse_checkpoints("boundaries+list:3,5").unwrap(),
            CheckpointRule::Union(vec![
                CheckpointRule::BlockBoundaries,
                CheckpointRule::Explicit(vec![3, 5])
            ])
        );
        assert!(parse_checkpoints("geometric:1").is_err());
        assert!(parse_checkpoints("nope").is_err());
    }

    #[test]
    fn weight_rules() {
        assert_eq!(
            parse_weights("const:1").unwrap(),
            WeightSequence::Constant(Scalar::ONE)
        );
        assert_eq!(
            parse_weights("poly:0,1").unwrap(),
            WeightSequence::Polynomial(vec![0.0, 1.0])
        );
        assert!(matches!(
            parse_weights("cubic:3").unwrap(),
            WeightSequence::FromBlockSchedule { .. }
        ));
        assert!(parse_weights("cubic:0").is_err());
        assert!(parse_weights("sine").is_err());
    }

    #[test]
    fn sources() {
        let args = |example, depth| SourceArgs {
            example,
            depth,
            schedule_file: None,
            horizon: None,
            seed: 0,
            out: None,
        };
        let s = resolve_source(&args(Some(Example::Factorial), Some(3))).unwrap();
        assert_eq!(s.horizon, schedules::factorial_bounds(4).unwrap().0 - 1);
        let s = resolve_source(&args(Some(Example::CubicShift), None)).unwrap();
        assert_eq!(s.horizon, schedules::cubic_c(16).unwrap() - 1);
        assert!(matches!(
            resolve_source(&args(None, None)),
            Err(CliError::Config(_))
        ));
        let err = resolve_source(&args(Some(Example::Factorial), Some(40)))
            .err()
            .unwrap();
        assert_eq!(err.exit_code(), EXIT_OVERFLOW);
        assert_eq!(
            resolve_source(&args(Some(Example::Cubic), Some(0)))
                .err()
                .unwrap()
                .exit_code(),
            EXIT_CONFIG
        );
    }

    #[test]
    fn meta_sidecar_name() {
        assert_eq!(
            meta_path(Path::new("out/f.csv")),
            PathBuf::from("out/f.csv.meta.json")
        );
    }
}
