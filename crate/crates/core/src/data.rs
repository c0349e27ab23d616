//! Synthetic stream generators and CSV ingestion.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("row {row}: expected {expected} columns, got {got}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("row {row}, column {column}: cannot parse {value:?} as a finite number")]
    NotNumeric { row: usize, column: usize, value: String },
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("no data rows")]
    Empty,
    #[error("invalid stream specification: {0}")]
    InvalidSpec(String),
}

/// Domain of the cubic curve y = 0.05·(x − 5)³.
pub const CUBIC_X_RANGE: (f64, f64) = (0.0, 10.0);
/// Width of the cells of the cumulative arc-length table.
const ARC_CELL: f64 = 1e-3;
const ARC_TOL: f64 = 1e-10;

pub fn cubic_point(x: f64) -> Point {
    Point::new(vec![x, 0.05 * (x - 5.0).powi(3)])
}

fn cubic_speed(x: f64) -> f64 {
    let dy = 0.15 * (x - 5.0).powi(2);
    (1.0 + dy * dy).sqrt()
}

/// Composite Simpson with four panels.
fn simpson(a: f64, b: f64) -> f64 {
    let h = (b - a) / 4.0;
    let f = |i: usize| cubic_speed(a + i as f64 * h);
    (f(0) + 4.0 * f(1) + 2.0 * f(2) + 4.0 * f(3) + f(4)) * h / 3.0
}

/// Arc length at the cell boundaries x = i·ARC_CELL.
fn arc_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let cells = ((CUBIC_X_RANGE.1 - CUBIC_X_RANGE.0) / ARC_CELL).round() as usize;
        let mut cum = Vec::with_capacity(cells + 1);
        cum.push(0.0);
        for i in 0..cells {
            let a = CUBIC_X_RANGE.0 + i as f64 * ARC_CELL;
            cum.push(cum[i] + simpson(a, a + ARC_CELL));
        }
        cum
    })
}

/// Arc length of the cubic from x = 0 to `x`.
pub fn cubic_arc_length(x: f64) -> f64 {
    let x = x.clamp(CUBIC_X_RANGE.0, CUBIC_X_RANGE.1);
    let table = arc_table();
    let i = (((x - CUBIC_X_RANGE.0) / ARC_CELL) as usize).min(table.len() - 2);
    let a = CUBIC_X_RANGE.0 + i as f64 * ARC_CELL;
    table[i] + if x > a { simpson(a, x) } else { 0.0 }
}

/// x at which the cubic has arc length `s`, by bisection inside the table
/// cell containing `s`.
pub fn cubic_x_at_arc_length(s: f64) -> f64 {
    let table = arc_table();
    let i = table.partition_point(|&c| c <= s).clamp(1, table.len() - 1) - 1;
    let mut lo = CUBIC_X_RANGE.0 + i as f64 * ARC_CELL;
    let mut hi = (lo + ARC_CELL).min(CUBIC_X_RANGE.1);
    while hi - lo > ARC_TOL {
        let mid = 0.5 * (lo + hi);
        if cubic_arc_length(mid) < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// How positions along the cubic are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CubicSampling {
    #[default]
    ArcLength,
    UniformX,
}

/// `n` points drawn uniformly along the cubic.
pub fn gen_cubic(n: usize, seed: u64) -> Vec<Point> {
    gen_cubic_with(n, seed, CubicSampling::ArcLength, 0.0)
}

pub fn gen_cubic_with(n: usize, seed: u64, sampling: CubicSampling, noise: f64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = cubic_arc_length(CUBIC_X_RANGE.1);
    let xs: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            match sampling {
                CubicSampling::ArcLength => cubic_x_at_arc_length(u * total),
                CubicSampling::UniformX => CUBIC_X_RANGE.0 + u * (CUBIC_X_RANGE.1 - CUBIC_X_RANGE.0),
            }
        })
        .collect();
    let pts = xs.into_iter().map(cubic_point).collect();
    add_noise(pts, noise, &mut rng)
}

pub fn param6_point(t: f64) -> Point {
    Point::new(vec![
        0.5 * t * t.cos(),
        0.5 * t * t.sin(),
        0.5 * t,
        -t,
        t.sqrt(),
        2.0 * (t + 1.0).ln(),
    ])
}

/// `n` points at equidistant parameters in [0, 2π], in a seeded random order.
pub fn gen_param6(n: usize, seed: u64) -> Vec<Point> {
    gen_param6_with(n, seed, 0.0)
}

pub fn gen_param6_with(n: usize, seed: u64, noise: f64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = if n > 1 { 2.0 * PI / (n - 1) as f64 } else { 0.0 };
    let mut ts: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
    ts.shuffle(&mut rng);
    let pts = ts.into_iter().map(param6_point).collect();
    add_noise(pts, noise, &mut rng)
}

fn add_noise(points: Vec<Point>, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<Point> {
    if sigma <= 0.0 {
        return points;
    }
    let normal = Normal::new(0.0, sigma).expect("positive finite standard deviation");
    points
        .into_iter()
        .map(|p| Point::new(p.coords().iter().map(|c| c + normal.sample(rng)).collect()))
        .collect()
}

/// Source of a stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Cubic,
    Param6,
    Csv(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub kind: StreamKind,
    /// Point count for synthetic kinds; ignored for CSV.
    pub n: usize,
    pub seed: u64,
    /// Standard deviation of isotropic Gaussian noise.
    pub noise: f64,
    pub sampling: CubicSampling,
}

impl StreamSpec {
    pub fn load(&self) -> Result<Vec<Point>, DataError> {
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(DataError::InvalidSpec(format!("noise must be ≥ 0, got {}", self.noise)));
        }
        match &self.kind {
            StreamKind::Cubic => Ok(gen_cubic_with(self.n, self.seed, self.sampling, self.noise)),
            StreamKind::Param6 => Ok(gen_param6_with(self.n, self.seed, self.noise)),
            StreamKind::Csv(path) => read_points_csv(path),
        }
    }
}

/// Reads one point per row; a first row that does not parse as numbers is
/// taken as a header.
pub fn read_points_csv(path: &Path) -> Result<Vec<Point>, DataError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    parse_points_csv(&text)
}

pub fn parse_points_csv(text: &str) -> Result<Vec<Point>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Malformed {
            row: i + 1,
            message: e.to_string(),
        })?;
        let row = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        if i == 0 && record.iter().any(|c| c.parse::<f64>().is_err()) {
            // header row
            width = Some(record.len());
            continue;
        }
        let parsed: Vec<Option<f64>> = record
            .iter()
            .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(DataError::Ragged {
                row,
                expected,
                got: record.len(),
            });
        }
        let mut coords = Vec::with_capacity(expected);
        for (column, (v, raw)) in parsed.into_iter().zip(record.iter()).enumerate() {
            coords.push(v.ok_or_else(|| DataError::NotNumeric {
                row,
                column: column + 1,
                value: raw.to_string(),
            })?);
        }
        points.push(Point::new(coords));
    }
    if points.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(points)
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_points_csv(path: &Path, points: &[Point]) -> Result<(), DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::new();
    for p in points {
        let row: Vec<String> = p.coords().iter().map(|&c| fmt_f64(c)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    File::create(path).and_then(|mut f| f.write_all(out.as_bytes())).map_err(io)
}
