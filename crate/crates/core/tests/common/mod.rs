//! Independent reference implementations shared by the integration tests.
//! They work on plain coordinate vectors and avoid the library's geometry,
//! enumeration and learner code.

#![allow(dead_code)]

use rand::Rng;

pub type Coords = Vec<f64>;

const SLACK: f64 = 1e-9;

pub fn sq(v: f64) -> f64 {
    v * v
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| sq(x - y)).sum::<f64>().sqrt()
}

/// Squared distance from `x` to segment [a, b] via the clamped projection.
pub fn seg_sq_dist(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(p, q)| q - p).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 == 0.0 {
        0.0
    } else {
        (x.iter().zip(a).zip(&ab).map(|((xi, ai), d)| (xi - ai) * d).sum::<f64>() / len2).clamp(0.0, 1.0)
    };
    x.iter().zip(a).zip(&ab).map(|((xi, ai), d)| sq(xi - ai - t * d)).sum()
}

pub fn line_sq_dist(vs: &[Coords], x: &[f64]) -> f64 {
    vs.windows(2).map(|w| seg_sq_dist(x, &w[0], &w[1])).fold(f64::INFINITY, f64::min)
}

/// Minimum squared distance over `per_segment + 1` evenly spaced samples
/// of every segment, endpoints included.
pub fn dense_sq_dist(vs: &[Coords], x: &[f64], per_segment: usize) -> f64 {
    let mut best = f64::INFINITY;
    for w in vs.windows(2) {
        for i in 0..=per_segment {
            let t = i as f64 / per_segment as f64;
            let d: f64 = x.iter().zip(&w[0]).zip(&w[1]).map(|((xi, a), b)| sq(xi - (a + t * (b - a)))).sum();
            best = best.min(d);
        }
    }
    best
}

/// Lattice points k·δ (k ∈ ℤ^d) with ‖kδ‖ ≤ √d·R, by brute force over the
/// enclosing cube, in lexicographic order.
pub fn lattice(d: usize, r: f64, delta: f64) -> Vec<Coords> {
    let radius = (d as f64).sqrt() * r;
    let m = (radius / delta).floor() as i64 + 1;
    let mut out = Vec::new();
    let mut idx = vec![-m; d];
    loop {
        let p: Coords = idx.iter().map(|&k| k as f64 * delta).collect();
        if p.iter().map(|v| v * v).sum::<f64>() <= sq(radius) * (1.0 + SLACK) {
            out.push(p);
        }
        let mut i = d;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] < m {
                idx[i] += 1;
                break;
            }
            idx[i] = -m;
        }
    }
}

/// Every polyline with `k + 1` distinct vertices from `grid` and length at
/// most `budget`, one per reversal pair.
pub fn lines_with_k(grid: &[Coords], k: usize, budget: f64) -> Vec<Vec<Coords>> {
    let mut out = Vec::new();
    let n = grid.len();
    let mut stack: Vec<usize> = Vec::new();
    fn rec(grid: &[Coords], k: usize, budget: f64, stack: &mut Vec<usize>, out: &mut Vec<Vec<Coords>>) {
        let n = grid.len();
        if stack.len() == k + 1 {
            let first = &grid[stack[0]];
            let last = &grid[stack[k]];
            let len: f64 = stack.windows(2).map(|w| dist(&grid[w[0]], &grid[w[1]])).sum();
            let forward_first = first.iter().zip(last).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne());
            if len <= budget * (1.0 + SLACK) && forward_first == Some(std::cmp::Ordering::Less) {
                out.push(stack.iter().map(|&i| grid[i].clone()).collect());
            }
            return;
        }
        for j in 0..n {
            if !stack.contains(&j) {
                stack.push(j);
                rec(grid, k, budget, stack, out);
                stack.pop();
            }
        }
    }
    for i in 0..n {
        stack.push(i);
        rec(grid, k, budget, &mut stack, &mut out);
        stack.pop();
    }
    out
}

/// Every line of the class with at most `p` segments.
pub fn class_lines(grid: &[Coords], p: usize, budget: f64) -> Vec<Vec<Coords>> {
    (1..=p).flat_map(|k| lines_with_k(grid, k, budget)).collect()
}

/// Volume of the unit d-ball from the closed forms for even and odd d.
pub fn unit_ball_volume(d: usize) -> f64 {
    let pi = std::f64::consts::PI;
    if d % 2 == 0 {
        let m = d / 2;
        pi.powi(m as i32) / (1..=m).map(|i| i as f64).product::<f64>()
    } else {
        let m = (d - 1) / 2;
        let double_fact: f64 = (0..=m).map(|i| (2 * i + 1) as f64).product();
        2f64.powi(m as i32 + 1) * pi.powi(m as i32) / double_fact
    }
}

/// (c0, c1, c2, c3) of the penalty and loss bound.
pub fn constants(d: usize, r: f64, delta: f64, p: usize) -> (f64, f64, f64, f64) {
    let df = d as f64;
    let c0 = df * sq(2.0 * r + delta);
    let c1 = (8.0 * p as f64 * std::f64::consts::E * unit_ball_volume(d)).ln() + 3.0 * df * df.sqrt() - df;
    let c2 = 2f64.ln() / (delta * df.sqrt()) + df / delta;
    let c3 = df * (df.sqrt() * (2.0 * r + delta) / delta).ln();
    (c0, c1, c2, c3)
}

/// Choices of follow-the-perturbed-leader computed directly: before round
/// t the leader minimizes Σ_{s<t} Δ(f, x_s) + (h_f − z_f)/η_{t−1}, ties to
/// the earlier candidate.
pub fn ftpl_replay(
    candidates: &[Vec<Coords>],
    penalties: &[f64],
    perturbations: &[f64],
    eta: impl Fn(usize) -> f64,
    stream: &[Coords],
) -> Vec<usize> {
    let n = candidates.len();
    let mut losses = vec![0.0; n];
    let mut choices = Vec::with_capacity(stream.len());
    for (t, x) in stream.iter().enumerate() {
        let e = eta(t);
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for i in 0..n {
            let v = losses[i] + (penalties[i] - perturbations[i]) / e;
            if v < best_val {
                best = i;
                best_val = v;
            }
        }
        choices.push(best);
        for i in 0..n {
            losses[i] += line_sq_dist(&candidates[i], x);
        }
    }
    choices
}

/// Win counts of each index under `draws` rounds of argmax(G + z/η) with
/// fresh Exp(1) draws by inversion.
pub fn monte_carlo_wins(scores: &[f64], eta: f64, draws: usize, rng: &mut impl Rng) -> Vec<u64> {
    let mut wins = vec![0u64; scores.len()];
    for _ in 0..draws {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, g) in scores.iter().enumerate() {
            let u: f64 = rng.random();
            let z = -(1.0 - u).ln();
            let v = g + z / eta;
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        wins[best] += 1;
    }
    wins
}

/// Minimum cumulative loss over a list of lines.
pub fn best_total(candidates: &[Vec<Coords>], stream: &[Coords]) -> f64 {
    candidates
        .iter()
        .map(|f| stream.iter().map(|x| line_sq_dist(f, x)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}
