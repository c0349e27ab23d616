//! Metrics and baselines: cumulative loss, regret against the best line in
//! hindsight, R², ground-truth curve loss and a sequential first-PC baseline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{mean, sq_dist, Point, PolygonalLine};
use crate::greedy::RoundRecord;
use crate::model::{enumerate_class, ModelError};
use crate::pca::first_pc_segment;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("points have zero total variance")]
    ZeroVariance,
    #[error("the enumerated class is empty")]
    EmptyClass,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cumulative_loss: f64,
    pub best_in_hindsight_loss: Option<f64>,
    pub regret: Option<f64>,
    pub r_squared: f64,
    pub per_round: Vec<f64>,
    pub baseline: Vec<f64>,
}

impl EvalReport {
    pub fn new(per_round: Vec<f64>, best_in_hindsight_loss: Option<f64>, r_squared: f64, baseline: Vec<f64>) -> Self {
        let cumulative_loss = per_round.iter().sum();
        EvalReport {
            cumulative_loss,
            best_in_hindsight_loss,
            regret: best_in_hindsight_loss.map(|b| cumulative_loss - b),
            r_squared,
            per_round,
            baseline,
        }
    }
}

pub fn cumulative_loss(records: &[RoundRecord]) -> f64 {
    records.iter().map(|r| r.loss).sum()
}

/// Σ_t Δ(f, x_t).
pub fn line_loss(f: &PolygonalLine, points: &[Point]) -> f64 {
    points.iter().map(|x| f.sq_dist_to(x.coords())).sum()
}

/// Exhaustive minimizer of the cumulative loss over all lines with at most
/// `p` segments on `grid` and length at most `length_budget`. Ties go to
/// fewer segments, then canonical order.
pub fn best_in_hindsight(
    stream: &[Point],
    grid: &[Point],
    p: usize,
    length_budget: f64,
    cap: usize,
) -> Result<(PolygonalLine, f64), EvalError> {
    let classes = enumerate_class(grid, p, length_budget, cap)?;
    let mut best: Option<(PolygonalLine, f64)> = None;
    // classes come by increasing k, lines in canonical order; strict < keeps the first
    for class in &classes {
        for f in &class.lines {
            let l = line_loss(f, stream);
            if best.as_ref().is_none_or(|(_, b)| l < *b) {
                best = Some((f.clone(), l));
            }
        }
    }
    best.ok_or(EvalError::EmptyClass)
}

/// 1 − Σ Δ(f, x_t) / Σ ‖x_t − x̄‖²; not clamped, so it can be negative.
pub fn r_squared(points: &[Point], f: &PolygonalLine) -> Result<f64, EvalError> {
    if points.len() < 2 {
        return Err(EvalError::TooFewPoints {
            need: 2,
            got: points.len(),
        });
    }
    let center = mean(points).expect("non-empty");
    let total: f64 = points.iter().map(|x| x.sq_dist(&center)).sum();
    if !(total > 0.0) {
        return Err(EvalError::ZeroVariance);
    }
    Ok(1.0 - line_loss(f, points) / total)
}

/// Σ_t of the squared distance from x_t to a curve given by a sampler
/// u ∈ [0, 1] ↦ point. The curve is replaced by the chord polyline through
/// N samples, N doubling from 1024 until the total changes by less than
/// 1e-6 relatively.
pub fn ground_truth_loss(points: &[Point], curve: impl Fn(f64) -> Point) -> f64 {
    let total_for = |n: usize| {
        let coords: Vec<f64> = (0..=n).flat_map(|i| curve(i as f64 / n as f64).into_coords()).collect();
        let dim = points.first().map_or(1, |p| p.dim());
        // consecutive samples may coincide on degenerate samplers; drop repeats
        let mut flat: Vec<f64> = Vec::with_capacity(coords.len());
        for v in coords.chunks_exact(dim) {
            if flat.len() < dim || flat[flat.len() - dim..] != *v {
                flat.extend_from_slice(v);
            }
        }
        match PolygonalLine::from_flat(dim, flat) {
            Ok(f) => line_loss(&f, points),
            Err(_) => points.iter().map(|x| sq_dist(x.coords(), curve(0.0).coords())).sum(),
        }
    };
    let mut n = 1024;
    let mut prev = total_for(n);
    loop {
        n *= 2;
        let cur = total_for(n);
        if (cur - prev).abs() <= 1e-6 * prev.abs() + 1e-12 || n >= 1 << 22 {
            return cur;
        }
        prev = cur;
    }
}

/// Per-round losses of the first-PC segment fitted to x_1..x_t and scored
/// on x_{t+1}, for t = t0..n−1. Without spread the loss is ‖x_{t+1} − x̄‖².
pub fn baseline_first_pc(stream: &[Point], t0: usize) -> Result<Vec<f64>, EvalError> {
    if stream.len() <= t0 || t0 == 0 {
        return Err(EvalError::TooFewPoints {
            need: t0 + 1,
            got: stream.len(),
        });
    }
    Ok((t0..stream.len())
        .map(|t| {
            let past = &stream[..t];
            let x = &stream[t];
            match first_pc_segment(past) {
                Some((a, b)) if a != b => {
                    crate::geometry::segment_param(x.coords(), a.coords(), b.coords()).1
                }
                Some((a, _)) => x.sq_dist(&a),
                None => x.sq_dist(&mean(past).expect("non-empty")),
            }
        })
        .collect())
}

/// Sample mean and sample standard deviation (n − 1 denominator; 0 for a
/// single value).
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    (m, var.sqrt())
}
