//! Command-line front end: `slpc run` plays the greedy learner over one or
//! more trials and writes a report, per-round records and SVG projections;
//! `slpc oracle` runs the exact learner on an enumerable class and reports
//! its regret.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::ser::Error as _;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::data::{cubic_point, fmt_f64, param6_point, CubicSampling, DataError, StreamKind, StreamSpec};
use crate::eval::{baseline_first_pc, best_in_hindsight, ground_truth_loss, mean_and_std, r_squared, EvalError};
use crate::exact::{ftpl_init, ftpl_run, EtaSchedule, LearnerError};
use crate::geometry::{Point, PolygonalLine};
use crate::greedy::{run_stream, Backfill, GreedyParams, RoundRecord};
use crate::model::{
    data_radius_scale, default_spacing, enumerate_class, penalty_for_segments, ModelConfig, ModelError,
};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "SLPC_THREADS";

#[derive(Parser, Debug)]
#[command(name = "slpc", version, about = "Sequential learning of principal curves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Play the locally greedy learner on a stream.
    Run(RunArgs),
    /// Run the exact learner over a fully enumerated class and report regret.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Synthetic {
    Cubic,
    Param6,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Sampling {
    ArcLength,
    UniformX,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackfillArg {
    Replay,
    Constant,
}

#[derive(Args, Clone, Debug)]
pub struct InputArgs {
    /// Synthetic stream.
    #[arg(long, value_enum, conflicts_with = "input", required_unless_present = "input")]
    pub synthetic: Option<Synthetic>,
    /// CSV file with one point per row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Number of synthetic points (default 100 for cubic, 200 for param6).
    #[arg(long)]
    pub n: Option<usize>,
    /// Standard deviation of Gaussian noise added to synthetic points.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Placement of cubic points.
    #[arg(long, value_enum, default_value = "arc-length")]
    pub sampling: Sampling,
}

#[derive(Args, Clone, Debug)]
pub struct ModelArgs {
    /// Maximum number of segments.
    #[arg(long, default_value_t = 20)]
    pub p: usize,
    /// Length budget (default 0.01·p·√d·R).
    #[arg(long = "L")]
    pub length: Option<f64>,
    /// Radius scale (default max‖x‖/√d).
    #[arg(long = "R")]
    pub radius: Option<f64>,
    /// Lattice spacing (default: bounding-box diagonal / 20).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Points used to fit the initial line.
    #[arg(long, default_value_t = 3)]
    pub t0: usize,
}

#[derive(Args, Clone, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Derive ε, α, β, η from the regret analysis for this horizon.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Class size assumed by the regret-analysis parameters.
    #[arg(long, default_value_t = 1, requires = "horizon")]
    pub actions: usize,
    /// Exploration probability.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Estimate for lines not played in an exploitation round.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Win-probability threshold for importance weighting.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Perturbation scale.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Estimate given to lines entering the pool late.
    #[arg(long, value_enum, default_value = "replay")]
    pub backfill: BackfillArg,
    /// Most local-grid points used as replacement vertices.
    #[arg(long)]
    pub vocabulary_cap: Option<usize>,
    /// Data seed; trial i plays with learner seed seed + 1 + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent learner runs on the same data.
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    /// Output directory.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Rounds whose lines are drawn as snapshots in the plots.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Vec<usize>,
    /// Also compute regret against the best line in hindsight (enumerates
    /// the class, so only for small grids).
    #[arg(long)]
    pub regret: bool,
    /// Enumeration cap for --regret.
    #[arg(long, default_value_t = 1_000_000)]
    pub cap: usize,
    /// Worker threads (overrides SLPC_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Clone, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Maximum number of segments.
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// Length budget (default 0.01·p·√d·R).
    #[arg(long = "L")]
    pub length: Option<f64>,
    /// Radius scale (default max‖x‖/√d).
    #[arg(long = "R")]
    pub radius: Option<f64>,
    /// Lattice spacing (default: bounding-box diagonal / 20).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Constant learning rate instead of the decreasing schedule.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Perturbation seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Most grid points or lines enumerated before giving up.
    #[arg(long, default_value_t = 100_000)]
    pub cap: usize,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (overrides SLPC_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Failure classes of the command line, each with its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("{0}")]
    Runtime(String),
    #[error("enumeration cap exceeded: {0}")]
    Cap(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Cap(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidSpec(_) => CliError::Config(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::CapExceeded { .. } => CliError::Cap(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<LearnerError> for CliError {
    fn from(e: LearnerError) -> Self {
        match e {
            LearnerError::Model(m) => m.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) => m.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Float serialized with 17 significant digits; non-finite values become null.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sig17(pub f64);

impl Serialize for Sig17 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        RawValue::from_string(fmt_f64(self.0)).map_err(S::Error::custom)?.serialize(s)
    }
}

fn sig_vec(v: &[f64]) -> Vec<Sig17> {
    v.iter().copied().map(Sig17).collect()
}

fn line_json(f: &PolygonalLine) -> Vec<Vec<Sig17>> {
    f.vertices().map(sig_vec).collect()
}

#[derive(Serialize)]
struct InputInfo {
    source: String,
    n: usize,
    dim: usize,
    noise: Sig17,
    sampling: &'static str,
    seed: u64,
}

#[derive(Serialize)]
struct ModelInfo {
    p: usize,
    #[serde(rename = "L")]
    length_budget: Sig17,
    #[serde(rename = "R")]
    radius_scale: Sig17,
    delta: Sig17,
    t0: usize,
    c0: Sig17,
    c1: Sig17,
    c2: Sig17,
    c3: Sig17,
}

impl ModelInfo {
    fn new(cfg: &ModelConfig) -> Self {
        let c = &cfg.constants;
        ModelInfo {
            p: cfg.max_segments,
            length_budget: Sig17(cfg.length_budget),
            radius_scale: Sig17(cfg.radius_scale),
            delta: Sig17(cfg.spacing),
            t0: cfg.init_count,
            c0: Sig17(c.c0),
            c1: Sig17(c.c1),
            c2: Sig17(c.c2),
            c3: Sig17(c.c3),
        }
    }
}

#[derive(Serialize)]
struct LearnerInfo {
    epsilon: Sig17,
    alpha: Sig17,
    beta: Sig17,
    eta: Sig17,
    backfill: &'static str,
    vocabulary_cap: usize,
    horizon: Option<usize>,
    actions: Option<usize>,
}

#[derive(Serialize)]
struct RunConfigInfo {
    input: InputInfo,
    model: ModelInfo,
    learner: LearnerInfo,
    trials: usize,
}

#[derive(Serialize)]
struct TrialReport {
    trial: usize,
    seed: u64,
    cumulative_loss: Sig17,
    #[serde(skip_serializing_if = "Option::is_none")]
    regret: Option<Sig17>,
    r_squared: Sig17,
    final_line: Vec<Vec<Sig17>>,
}

#[derive(Serialize)]
struct RunReport {
    config: RunConfigInfo,
    per_trial: Vec<TrialReport>,
    mean: Sig17,
    std: Sig17,
    baseline_cumulative_loss: Sig17,
    #[serde(skip_serializing_if = "Option::is_none")]
    ground_truth_loss: Option<Sig17>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_in_hindsight_loss: Option<Sig17>,
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("slpc: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(a) => with_threads(a.threads, || cmd_run(a)),
        Command::Oracle(a) => with_threads(a.threads, || cmd_oracle(a)),
    }
}

fn with_threads(flag: Option<usize>, job: impl FnOnce() -> Result<(), CliError> + Send) -> Result<(), CliError> {
    let threads = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Config(format!("{THREADS_ENV} = {v:?} is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    match threads {
        None => job(),
        Some(0) => Err(CliError::Config("thread count must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(job),
    }
}

fn stream_spec(input: &InputArgs, seed: u64) -> Result<StreamSpec, CliError> {
    let (kind, default_n) = match (&input.synthetic, &input.input) {
        (Some(Synthetic::Cubic), _) => (StreamKind::Cubic, 100),
        (Some(Synthetic::Param6), _) => (StreamKind::Param6, 200),
        (None, Some(path)) => (StreamKind::Csv(path.clone()), 0),
        (None, None) => return Err(CliError::Config("give --synthetic or --input".into())),
    };
    Ok(StreamSpec {
        kind,
        n: input.n.unwrap_or(default_n),
        seed,
        noise: input.noise,
        sampling: match input.sampling {
            Sampling::ArcLength => CubicSampling::ArcLength,
            Sampling::UniformX => CubicSampling::UniformX,
        },
    })
}

fn input_info(spec: &StreamSpec, points: &[Point]) -> InputInfo {
    let source = match &spec.kind {
        StreamKind::Cubic => "cubic".to_string(),
        StreamKind::Param6 => "param6".to_string(),
        StreamKind::Csv(p) => p.display().to_string(),
    };
    let synthetic = !matches!(spec.kind, StreamKind::Csv(_));
    InputInfo {
        source,
        n: points.len(),
        dim: points.first().map_or(0, |p| p.dim()),
        noise: Sig17(if synthetic { spec.noise } else { 0.0 }),
        sampling: match (&spec.kind, spec.sampling) {
            (StreamKind::Cubic, CubicSampling::ArcLength) => "arc-length",
            (StreamKind::Cubic, CubicSampling::UniformX) => "uniform-x",
            _ => "n/a",
        },
        seed: spec.seed,
    }
}

/// Model configuration from the data, with flag overrides.
pub fn model_config(
    points: &[Point],
    p: usize,
    length: Option<f64>,
    radius: Option<f64>,
    delta: Option<f64>,
    t0: usize,
) -> Result<ModelConfig, CliError> {
    let dim = points.first().ok_or_else(|| CliError::Config("the stream is empty".into()))?.dim();
    let r = radius.unwrap_or_else(|| data_radius_scale(points));
    let spacing = delta.unwrap_or_else(|| default_spacing(points));
    let l = length.unwrap_or(0.01 * p as f64 * (dim as f64).sqrt() * r);
    Ok(ModelConfig::new(dim, r, spacing, p, l, t0)?)
}

fn learner_params(a: &RunArgs, cfg: &ModelConfig) -> Result<GreedyParams, CliError> {
    let mut prm = match a.horizon {
        Some(h) => GreedyParams::from_theorem3(cfg, h, a.actions)?,
        None => GreedyParams::practical(cfg),
    };
    if let Some(v) = a.epsilon {
        prm.epsilon = v;
    }
    if let Some(v) = a.alpha {
        prm.alpha = v;
    }
    if let Some(v) = a.beta {
        prm.beta = v;
    }
    if let Some(v) = a.eta {
        prm.eta = v;
    }
    if let Some(v) = a.vocabulary_cap {
        prm.vocabulary_cap = v;
    }
    prm.backfill = match a.backfill {
        BackfillArg::Replay => Backfill::Replay,
        BackfillArg::Constant => Backfill::Constant,
    };
    prm.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(prm)
}

pub fn cmd_run(a: &RunArgs) -> Result<(), CliError> {
    if a.trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    let spec = stream_spec(&a.input, a.seed)?;
    let points = spec.load()?;
    let m = &a.model;
    let cfg = model_config(&points, m.p, m.length, m.radius, m.delta, m.t0)?;
    let params = learner_params(a, &cfg)?;
    if points.len() <= cfg.init_count {
        return Err(CliError::Config(format!(
            "the stream has {} points; at least {} are needed",
            points.len(),
            cfg.init_count + 1
        )));
    }

    let hindsight = if a.regret {
        let grid = cfg.grid().points(a.cap)?;
        Some(best_in_hindsight(&points[cfg.init_count..], &grid, cfg.max_segments, cfg.length_budget, a.cap)?.1)
    } else {
        None
    };

    let runs: Vec<(u64, Vec<RoundRecord>)> = (0..a.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = a.seed.wrapping_add(1).wrapping_add(trial as u64);
            run_stream(&points, &cfg, params.clone(), seed).map(|r| (seed, r))
        })
        .collect::<Result<_, _>>()?;

    let mut per_trial = Vec::with_capacity(runs.len());
    let mut losses = Vec::with_capacity(runs.len());
    for (trial, (seed, records)) in runs.iter().enumerate() {
        let last = &records.last().expect("stream longer than t0").chosen;
        let loss: f64 = records.iter().map(|r| r.loss).sum();
        losses.push(loss);
        per_trial.push(TrialReport {
            trial,
            seed: *seed,
            cumulative_loss: Sig17(loss),
            regret: hindsight.map(|b| Sig17(loss - b)),
            r_squared: Sig17(r_squared(&points, last).unwrap_or(f64::NAN)),
            final_line: line_json(last),
        });
    }
    let (mean, std) = mean_and_std(&losses);
    let baseline: f64 = baseline_first_pc(&points, cfg.init_count)?.iter().sum();
    let truth = match spec.kind {
        StreamKind::Cubic => Some(ground_truth_loss(&points, |u| cubic_point(10.0 * u))),
        StreamKind::Param6 => Some(ground_truth_loss(&points, |u| param6_point(2.0 * std::f64::consts::PI * u))),
        StreamKind::Csv(_) => None,
    };
    let report = RunReport {
        config: RunConfigInfo {
            input: input_info(&spec, &points),
            model: ModelInfo::new(&cfg),
            learner: LearnerInfo {
                epsilon: Sig17(params.epsilon),
                alpha: Sig17(params.alpha),
                beta: Sig17(params.beta),
                eta: Sig17(params.eta),
                backfill: match params.backfill {
                    Backfill::Replay => "replay",
                    Backfill::Constant => "constant",
                },
                vocabulary_cap: params.vocabulary_cap,
                horizon: a.horizon,
                actions: a.horizon.map(|_| a.actions),
            },
            trials: a.trials,
        },
        per_trial,
        mean: Sig17(mean),
        std: Sig17(std),
        baseline_cumulative_loss: Sig17(baseline),
        ground_truth_loss: truth.map(Sig17),
        best_in_hindsight_loss: hindsight.map(Sig17),
    };

    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&a.out.join("report.json"), &(json + "\n"))?;
    write_rounds(&a.out.join("rounds.csv"), &runs)?;
    for (i, j) in projection_pairs(cfg.dim) {
        let first = &runs[0].1;
        let snapshots: Vec<&PolygonalLine> = a
            .snapshots
            .iter()
            .filter_map(|&t| first.iter().find(|r| r.t == t).map(|r| &r.chosen))
            .collect();
        let svg = projection_svg(&points, &first.last().expect("non-empty").chosen, &snapshots, (i, j));
        write_file(&a.out.join(format!("plot_{}_{}.svg", i + 1, j + 1)), &svg)?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_rounds(path: &Path, runs: &[(u64, Vec<RoundRecord>)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let mut put = |row: &[String]| w.write_record(row).map_err(|e| io_err(path, e));
    put(&["trial", "t", "phase", "k", "loss", "reward", "win_prob"].map(String::from))?;
    for (trial, (_, records)) in runs.iter().enumerate() {
        for r in records {
            put(&[
                trial.to_string(),
                r.t.to_string(),
                r.phase.as_str().to_string(),
                r.chosen.segment_count().to_string(),
                fmt_f64(r.loss),
                fmt_f64(r.reward),
                r.win_probability.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Coordinate pairs plotted for a given dimension (0-based).
pub fn projection_pairs(dim: usize) -> Vec<(usize, usize)> {
    [(0, 1), (2, 4), (3, 5)].into_iter().filter(|&(_, j)| j < dim).collect()
}

const PLOT_SIZE: f64 = 600.0;
const PLOT_MARGIN: f64 = 30.0;

/// Static SVG of the points, the final line and optional snapshot lines,
/// projected on coordinates `(i, j)`.
pub fn projection_svg(points: &[Point], last: &PolygonalLine, snapshots: &[&PolygonalLine], (i, j): (usize, usize)) -> String {
    let xs = points.iter().map(|p| p.coords()[i]).chain(last.vertices().map(|v| v[i]));
    let ys = points.iter().map(|p| p.coords()[j]).chain(last.vertices().map(|v| v[j]));
    let bounds = |it: &mut dyn Iterator<Item = f64>| it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (x0, x1) = bounds(&mut xs.into_iter());
    let (y0, y1) = bounds(&mut ys.into_iter());
    let span = (x1 - x0).max(y1 - y0).max(f64::MIN_POSITIVE);
    let scale = (PLOT_SIZE - 2.0 * PLOT_MARGIN) / span;
    let px = |v: f64| PLOT_MARGIN + (v - x0) * scale;
    let py = |v: f64| PLOT_SIZE - PLOT_MARGIN - (v - y0) * scale;
    let path = |f: &PolygonalLine| {
        f.vertices()
            .map(|v| format!("{:.3},{:.3}", px(v[i]), py(v[j])))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT_SIZE}" height="{PLOT_SIZE}" viewBox="0 0 {PLOT_SIZE} {PLOT_SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{PLOT_MARGIN}" y="20" font-family="sans-serif" font-size="14">coordinates {} and {}</text>"#,
        i + 1,
        j + 1
    );
    for (k, p) in points.iter().enumerate() {
        let fill = if k + 1 == points.len() { "red" } else { "black" };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.3}" cy="{:.3}" r="2" fill="{fill}"/>"#,
            px(p.coords()[i]),
            py(p.coords()[j])
        );
    }
    for f in snapshots {
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="gray" stroke-width="1" stroke-dasharray="4 3"/>"#,
            path(f)
        );
    }
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="green" stroke-width="2"/>"#, path(last));
    s.push_str("</svg>\n");
    s
}

#[derive(Serialize)]
struct OracleRound {
    t: usize,
    chosen: usize,
    line: Vec<Vec<Sig17>>,
    loss: Sig17,
}

#[derive(Serialize)]
struct OracleReport {
    input: InputInfo,
    model: ModelInfo,
    eta: Option<Sig17>,
    seed: u64,
    candidates: usize,
    rounds: Vec<OracleRound>,
    cumulative_loss: Sig17,
    best_line: Vec<Vec<Sig17>>,
    best_loss: Sig17,
    regret: Sig17,
}

pub fn cmd_oracle(a: &OracleArgs) -> Result<(), CliError> {
    let spec = stream_spec(&a.input, a.seed)?;
    let points = spec.load()?;
    let cfg = model_config(&points, a.p, a.length, a.radius, a.delta, 3)?;
    let grid = cfg.grid().points(a.cap)?;
    let classes = enumerate_class(&grid, cfg.max_segments, cfg.length_budget, a.cap)?;
    let candidates: Vec<PolygonalLine> = classes.into_iter().flat_map(|c| c.lines).collect();
    if candidates.is_empty() {
        return Err(CliError::Config("no line fits the length budget on this grid".into()));
    }
    let penalties = candidates
        .iter()
        .map(|f| penalty_for_segments(f.segment_count(), &cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let schedule = match a.eta {
        Some(eta) => EtaSchedule::Constant(eta),
        None => EtaSchedule::from_config(&cfg),
    };
    let mut state = ftpl_init(candidates, penalties, schedule, a.seed)?;
    let steps = ftpl_run(&mut state, &points)?;
    let total: f64 = steps.iter().map(|s| s.loss).sum();
    let (best, best_loss) = best_in_hindsight(&points, &grid, cfg.max_segments, cfg.length_budget, a.cap)?;
    let report = OracleReport {
        input: input_info(&spec, &points),
        model: ModelInfo::new(&cfg),
        eta: a.eta.map(Sig17),
        seed: a.seed,
        candidates: state.candidates().len(),
        rounds: steps
            .iter()
            .map(|s| OracleRound {
                t: s.t,
                chosen: s.chosen,
                line: line_json(&state.candidates()[s.chosen]),
                loss: Sig17(s.loss),
            })
            .collect(),
        cumulative_loss: Sig17(total),
        best_line: line_json(&best),
        best_loss: Sig17(best_loss),
        regret: Sig17(total - best_loss),
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
    match &a.out {
        Some(path) => write_file(path, &json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig17_formats_and_nulls() {
        let v = serde_json::to_string(&vec![Sig17(0.1), Sig17(f64::NAN), Sig17(-2.5e-300)]).unwrap();
        assert_eq!(v, "[1.0000000000000001e-1,null,-2.5000000000000000e-300]");
        let back: Vec<Option<f64>> = serde_json::from_str(&v).unwrap();
        assert_eq!(back, vec![Some(0.1), None, Some(-2.5e-300)]);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(ModelError::CapExceeded { what: "grid", cap: 1 }).exit_code(), 4);
        assert_eq!(CliError::from(ModelError::InvalidParameter("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(DataError::Empty).exit_code(), 3);
        assert_eq!(CliError::from(LearnerError::EmptyCandidates).exit_code(), 1);
    }

    #[test]
    fn projection_pairs_follow_dimension() {
        assert_eq!(projection_pairs(1), vec![]);
        assert_eq!(projection_pairs(2), vec![(0, 1)]);
        assert_eq!(projection_pairs(6), vec![(0, 1), (2, 4), (3, 5)]);
    }

    #[test]
    fn usage_errors_exit_with_config_code() {
        assert_eq!(main_with_args(["slpc", "run"]), 2);
        assert_eq!(main_with_args(["slpc", "run", "--synthetic", "cubic", "--input", "a.csv"]), 2);
        assert_eq!(main_with_args(["slpc", "run", "--synthetic", "cubic", "--trials", "0"]), 2);
    }
}
