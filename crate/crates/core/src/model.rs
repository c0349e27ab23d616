//! Lattice grids, curve classes and the constants that drive the learners.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{sq_dist, sq_norm, Point, PolygonalLine};

/// Default cap on enumerated grid points.
pub const DEFAULT_GRID_CAP: usize = 1_000_000;
/// Default cap on enumerated lines.
pub const DEFAULT_LINE_CAP: usize = 1_000_000;

/// Relative slack on ball-membership tests.
const BALL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("enumeration exceeds cap of {cap} {what}")]
    CapExceeded { what: &'static str, cap: usize },
    #[error("segment count {k} outside [1, {p}]")]
    SegmentCount { k: usize, p: usize },
    #[error("parameter helper gives an unusable combination: {0}")]
    InvalidCombination(String),
}

fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::InvalidParameter(msg.into())
}

/// Volume of the unit ball of R^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    // V_0 = 1, V_1 = 2, V_d = 2π/d · V_{d-2}
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * PI / k as f64;
        k += 2;
    }
    v
}

/// The lattice δZ^d restricted to the ball B(0, √d·R).
///
/// The grid is never materialized as a whole; points are enumerated on
/// demand inside query balls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeGrid {
    dim: usize,
    radius_scale: f64,
    spacing: f64,
}

impl LatticeGrid {
    pub fn new(dim: usize, radius_scale: f64, spacing: f64) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if !(radius_scale > 0.0 && radius_scale.is_finite()) {
            return Err(invalid(format!("R must be positive, got {radius_scale}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(invalid(format!("δ must be positive, got {spacing}")));
        }
        Ok(LatticeGrid {
            dim,
            radius_scale,
            spacing,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius_scale(&self) -> f64 {
        self.radius_scale
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Radius √d·R of the data ball.
    pub fn ball_radius(&self) -> f64 {
        self.ball_radius_sq().sqrt()
    }

    fn ball_radius_sq(&self) -> f64 {
        self.dim as f64 * self.radius_scale * self.radius_scale
    }

    fn in_ball(&self, p: &[f64]) -> bool {
        let r2 = self.ball_radius_sq();
        sq_norm(p) <= r2 * (1.0 + BALL_TOL)
    }

    fn coord(&self, i: i64) -> f64 {
        i as f64 * self.spacing
    }

    /// True when `p` is a lattice point of the grid.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim
            && p.iter().all(|&c| c == self.coord((c / self.spacing).round() as i64))
            && self.in_ball(p)
    }

    /// Rough count of grid points, from the ball volume.
    pub fn estimated_size(&self) -> f64 {
        unit_ball_volume(self.dim) * (self.ball_radius() / self.spacing + 0.5).powi(self.dim as i32)
    }

    /// Grid points inside the closed ball B(center, radius), in
    /// lexicographic order. Visiting stops early when `visit` returns false.
    pub fn visit_within(&self, center: &[f64], radius: f64, mut visit: impl FnMut(&[f64]) -> bool) {
        assert_eq!(center.len(), self.dim, "query center dimension");
        if !(radius >= 0.0) {
            return;
        }
        let mut buf = vec![0.0; self.dim];
        self.visit_rec(0, center, self.query_radius_sq(radius), 0.0, 0.0, &mut buf, &mut visit);
    }

    /// Squared query radius with the slack used by every ball query.
    fn query_radius_sq(&self, radius: f64) -> f64 {
        let r2 = radius * radius;
        r2 + BALL_TOL * r2.max(self.spacing * self.spacing)
    }

    /// True when `p` is a grid point that [`Self::visit_within`] would report
    /// for the ball B(center, radius).
    pub fn ball_contains(&self, center: &[f64], radius: f64, p: &[f64]) -> bool {
        radius >= 0.0 && sq_dist(p, center) <= self.query_radius_sq(radius) && self.contains(p)
    }

    #[allow(clippy::too_many_arguments)]
    fn visit_rec(
        &self,
        axis: usize,
        center: &[f64],
        r2: f64,
        used: f64,
        norm_used: f64,
        buf: &mut Vec<f64>,
        visit: &mut impl FnMut(&[f64]) -> bool,
    ) -> bool {
        if axis == self.dim {
            if self.in_ball(buf) {
                return visit(buf);
            }
            return true;
        }
        let rem = (r2 - used).max(0.0).sqrt();
        let big_rem = (self.ball_radius_sq() * (1.0 + BALL_TOL) - norm_used).max(0.0).sqrt();
        let c = center[axis];
        let lo = ((c - rem) / self.spacing).ceil().max((-big_rem / self.spacing).ceil()) as i64;
        let hi = ((c + rem) / self.spacing).floor().min((big_rem / self.spacing).floor()) as i64;
        // widen by one to absorb rounding in the bounds; the exact tests below decide
        for i in (lo - 1)..=(hi + 1) {
            let v = self.coord(i);
            let du = (v - c) * (v - c);
            if used + du > r2 || norm_used + v * v > self.ball_radius_sq() * (1.0 + BALL_TOL) {
                continue;
            }
            buf[axis] = v;
            if !self.visit_rec(axis + 1, center, r2, used + du, norm_used + v * v, buf, visit) {
                return false;
            }
        }
        true
    }

    /// Grid points inside the closed ball B(center, radius).
    pub fn points_within(&self, center: &[f64], radius: f64) -> Vec<Point> {
        let mut out = Vec::new();
        self.visit_within(center, radius, |p| {
            out.push(Point::new(p.to_vec()));
            true
        });
        out
    }

    /// Number of grid points inside the ball, counting at most `limit + 1`.
    pub fn count_within(&self, center: &[f64], radius: f64, limit: usize) -> usize {
        let mut n = 0;
        self.visit_within(center, radius, |_| {
            n += 1;
            n <= limit
        });
        n
    }

    /// Every grid point, failing when there are more than `cap`.
    pub fn points(&self, cap: usize) -> Result<Vec<Point>, ModelError> {
        let origin = vec![0.0; self.dim];
        let mut out = Vec::new();
        let mut exceeded = false;
        self.visit_within(&origin, self.ball_radius(), |p| {
            if out.len() == cap {
                exceeded = true;
                return false;
            }
            out.push(Point::new(p.to_vec()));
            true
        });
        if exceeded {
            return Err(ModelError::CapExceeded {
                what: "grid points",
                cap,
            });
        }
        Ok(out)
    }

    /// Nearest grid point to `x`; ties go to the lexicographically smaller
    /// point.
    pub fn snap(&self, x: &[f64]) -> Point {
        assert_eq!(x.len(), self.dim, "snap dimension");
        let mut radius = self.spacing * (self.dim as f64).sqrt();
        loop {
            let mut best: Option<(f64, Vec<f64>)> = None;
            self.visit_within(x, radius, |p| {
                let d = sq_dist(p, x);
                // lexicographic visiting order settles ties
                if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                    best = Some((d, p.to_vec()));
                }
                true
            });
            if let Some((_, p)) = best {
                return Point::new(p);
            }
            radius *= 2.0;
        }
    }
}

/// Enumerates the whole grid Q_δ, failing beyond `cap` points.
pub fn build_grid(d: usize, r: f64, delta: f64, cap: usize) -> Result<Vec<Point>, ModelError> {
    LatticeGrid::new(d, r, delta)?.points(cap)
}

/// Constants of the regret analysis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// c0 bounds the loss; c1, c2, c3 bound the log-cardinality of the classes.
pub fn constants(d: usize, r: f64, delta: f64, p: usize) -> Constants {
    let df = d as f64;
    let c0 = df * (2.0 * r + delta).powi(2);
    let c1 = (8.0 * p as f64 * E * unit_ball_volume(d)).ln() + 3.0 * df.powf(1.5) - df;
    let c2 = std::f64::consts::LN_2 / (delta * df.sqrt()) + df / delta;
    let c3 = df * (df.sqrt() * (2.0 * r + delta) / delta).ln();
    Constants { c0, c1, c2, c3 }
}

/// Model parameters shared by every learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    /// R: data lie in B(0, √d·R).
    pub radius_scale: f64,
    /// δ: lattice spacing.
    pub spacing: f64,
    /// p: maximum number of segments.
    pub max_segments: usize,
    /// L: length budget of the curve class.
    pub length_budget: f64,
    /// t0: observations used to initialize the greedy learner.
    pub init_count: usize,
    pub constants: Constants,
}

impl ModelConfig {
    pub fn new(
        dim: usize,
        radius_scale: f64,
        spacing: f64,
        max_segments: usize,
        length_budget: f64,
        init_count: usize,
    ) -> Result<Self, ModelError> {
        LatticeGrid::new(dim, radius_scale, spacing)?;
        if max_segments == 0 {
            return Err(invalid("p must be at least 1"));
        }
        if !(length_budget > 0.0) {
            return Err(invalid(format!("L must be positive, got {length_budget}")));
        }
        if !(2..=3).contains(&init_count) {
            return Err(invalid(format!("t0 must be 2 or 3, got {init_count}")));
        }
        Ok(ModelConfig {
            dim,
            radius_scale,
            spacing,
            max_segments,
            length_budget,
            init_count,
            constants: constants(dim, radius_scale, spacing, max_segments),
        })
    }

    /// Data-driven recipe: R = max‖x‖/√d, L = 0.01·p·√d·R, and δ from
    /// [`default_spacing`] unless given.
    pub fn from_data(
        points: &[Point],
        max_segments: usize,
        spacing: Option<f64>,
        init_count: usize,
    ) -> Result<Self, ModelError> {
        let dim = points
            .first()
            .ok_or_else(|| invalid("no data to derive R from"))?
            .dim();
        let r = data_radius_scale(points);
        let spacing = spacing.unwrap_or_else(|| default_spacing(points));
        let length = 0.01 * max_segments as f64 * (dim as f64).sqrt() * r;
        Self::new(dim, r, spacing, max_segments, length, init_count)
    }

    pub fn grid(&self) -> LatticeGrid {
        LatticeGrid::new(self.dim, self.radius_scale, self.spacing)
            .expect("config was validated on construction")
    }

    /// Σ-budget term c1·p + c2·L + c3 appearing in every learning rate.
    pub fn complexity_budget(&self) -> f64 {
        let c = &self.constants;
        c.c1 * self.max_segments as f64 + c.c2 * self.length_budget + c.c3
    }
}

/// R = max‖x‖/√d over the data.
pub fn data_radius_scale(points: &[Point]) -> f64 {
    let d = points.first().map_or(1, |p| p.dim()) as f64;
    points.iter().map(|p| p.norm()).fold(0.0, f64::max) / d.sqrt()
}

/// One twentieth of the bounding-box diagonal of the data, or R/10 when
/// all points coincide.
pub fn default_spacing(points: &[Point]) -> f64 {
    let d = points.first().map_or(0, |p| p.dim());
    let diag = (0..d)
        .map(|i| {
            let (lo, hi) = points
                .iter()
                .map(|p| p.coords()[i])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            (hi - lo) * (hi - lo)
        })
        .sum::<f64>()
        .sqrt();
    if diag > 0.0 {
        diag / 20.0
    } else {
        data_radius_scale(points) / 10.0
    }
}

/// h(f) = c1·K(f) + c2·L + c3, with L the class budget.
pub fn penalty(f: &PolygonalLine, cfg: &ModelConfig) -> Result<f64, ModelError> {
    penalty_for_segments(f.segment_count(), cfg)
}

pub fn penalty_for_segments(k: usize, cfg: &ModelConfig) -> Result<f64, ModelError> {
    if k == 0 || k > cfg.max_segments {
        return Err(ModelError::SegmentCount {
            k,
            p: cfg.max_segments,
        });
    }
    let c = &cfg.constants;
    Ok(c.c1 * k as f64 + c.c2 * cfg.length_budget + c.c3)
}

/// Lines with exactly `k` segments of a desk-scale class.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveClassIndex {
    pub k: usize,
    pub lines: Vec<PolygonalLine>,
}

/// All lines with `k + 1` pairwise-distinct vertices from `points` and length
/// at most `length_budget`, one representative per reversal pair, in
/// canonical order.
pub fn enumerate_lines(
    points: &[Point],
    k: usize,
    length_budget: f64,
    cap: usize,
) -> Result<CurveClassIndex, ModelError> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    let mut sorted: Vec<&Point> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.coords()
            .iter()
            .zip(b.coords())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    sorted.dedup_by(|a, b| a.coords() == b.coords());
    let n = sorted.len();
    let dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| sorted[i].sq_dist(sorted[j]).sqrt()).collect())
        .collect();
    let limit = length_budget * (1.0 + BALL_TOL);

    let mut lines = Vec::new();
    let mut path = Vec::with_capacity(k + 1);
    let mut used = vec![false; n];
    struct Ctx<'a> {
        k: usize,
        limit: f64,
        cap: usize,
        dist: &'a [Vec<f64>],
        sorted: &'a [&'a Point],
    }
    fn rec(
        ctx: &Ctx<'_>,
        path: &mut Vec<usize>,
        used: &mut [bool],
        length: f64,
        lines: &mut Vec<PolygonalLine>,
    ) -> Result<(), ModelError> {
        if path.len() == ctx.k + 1 {
            // reversal pairs: keep the one starting at the smaller point
            if path[0] < path[ctx.k] {
                if lines.len() == ctx.cap {
                    return Err(ModelError::CapExceeded {
                        what: "lines",
                        cap: ctx.cap,
                    });
                }
                let vs = path.iter().map(|&i| ctx.sorted[i].clone()).collect();
                lines.push(PolygonalLine::new(vs).expect("distinct lattice vertices"));
            }
            return Ok(());
        }
        let last = *path.last().expect("non-empty path");
        for next in 0..used.len() {
            if used[next] {
                continue;
            }
            let len = length + ctx.dist[last][next];
            if len > ctx.limit {
                continue;
            }
            used[next] = true;
            path.push(next);
            rec(ctx, path, used, len, lines)?;
            path.pop();
            used[next] = false;
        }
        Ok(())
    }
    let ctx = Ctx {
        k,
        limit,
        cap,
        dist: &dist,
        sorted: &sorted,
    };
    for start in 0..n {
        used[start] = true;
        path.push(start);
        rec(&ctx, &mut path, &mut used, 0.0, &mut lines)?;
        path.pop();
        used[start] = false;
    }
    Ok(CurveClassIndex { k, lines })
}

/// Every class F_{k,L} for k = 1..=p. Stops at the first empty class, since
/// no longer line can then fit the budget.
pub fn enumerate_class(
    points: &[Point],
    p: usize,
    length_budget: f64,
    cap: usize,
) -> Result<Vec<CurveClassIndex>, ModelError> {
    let mut out = Vec::new();
    let mut total = 0usize;
    for k in 1..=p {
        let class = enumerate_lines(points, k, length_budget, cap.saturating_sub(total))?;
        if class.lines.is_empty() {
            break;
        }
        total += class.lines.len();
        out.push(class);
    }
    Ok(out)
}

/// Parameters of the locally greedy learner derived from its regret
/// analysis, with `n_actions` standing in for |F_p|.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    pub beta: f64,
    pub alpha: f64,
    pub c0_hat: f64,
    pub epsilon: f64,
    pub eta: f64,
}

/// The analysis assumes p > 6 and T ≥ 2·|F_p|²; neither is enforced here.
pub fn theorem3_params(
    n_actions: usize,
    horizon: usize,
    cfg: &ModelConfig,
) -> Result<LearnerParams, ModelError> {
    if n_actions == 0 || horizon == 0 {
        return Err(invalid("n_actions and T must be at least 1"));
    }
    let n = n_actions as f64;
    let t = horizon as f64;
    let c0 = cfg.constants.c0;
    let beta = n.powf(-0.5) * t.powf(-0.25);
    if beta >= 1.0 {
        return Err(ModelError::InvalidCombination(format!("β = {beta} ≥ 1")));
    }
    let epsilon = 1.0 - n.powf(0.5 - 3.0 / cfg.max_segments as f64) * t.powf(-0.25);
    if epsilon <= 0.0 {
        return Err(ModelError::InvalidCombination(format!("ε = {epsilon} ≤ 0")));
    }
    let alpha = c0 / beta;
    let c0_hat = 2.0 * c0 / beta;
    let eta = cfg.complexity_budget().sqrt() / ((t * (E - 1.0)).sqrt() * c0_hat);
    Ok(LearnerParams {
        beta,
        alpha,
        c0_hat,
        epsilon,
        eta,
    })
}
