//! Locally greedy sequential learner: follow-the-perturbed-leader over a
//! lazily grown pool of lines, alternating full-information exploration with
//! exploitation restricted to local edits of the previous line.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exact::{draw_exp1, win_probability, LearnerError};
use crate::geometry::{observation_neighborhood, sq_dist, Point, PolygonalLine};
use crate::model::{penalty_for_segments, theorem3_params, LatticeGrid, ModelConfig};
use crate::pca::first_pc_segment;

/// Relative slack on the length budget.
const LENGTH_TOL: f64 = 1e-12;
/// Practical learning rate times δ².
const PRACTICAL_ETA_SCALE: f64 = 6.0;
/// Pool sizes above this are scored in parallel.
const PAR_THRESHOLD: usize = 4096;

/// How a line entering the pool late gets its cumulative estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backfill {
    /// Exact rewards of every past full-information round plus α per past
    /// exploitation round: what the line would hold had it been pooled from
    /// the start.
    Replay,
    /// α per elapsed round.
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyParams {
    /// Exploration probability.
    pub epsilon: f64,
    /// Reward estimate of actions not observed in an exploitation round.
    pub alpha: f64,
    /// Win-probability threshold for importance weighting.
    pub beta: f64,
    /// Learning rate scaling penalties and perturbations.
    pub eta: f64,
    pub backfill: Backfill,
    /// Most local-grid points used as replacement vertices.
    pub vocabulary_cap: usize,
    /// Largest replacement count enumerated exhaustively; beyond it only
    /// single-vertex edits are generated.
    pub exhaustive_limit: usize,
}

impl GreedyParams {
    /// Settings of the regret analysis for horizon `horizon`, with
    /// `n_actions` standing in for the class size.
    pub fn from_theorem3(cfg: &ModelConfig, horizon: usize, n_actions: usize) -> Result<Self, LearnerError> {
        let prm = theorem3_params(n_actions, horizon, cfg)?;
        Ok(GreedyParams {
            epsilon: prm.epsilon,
            alpha: prm.alpha,
            beta: prm.beta,
            eta: prm.eta,
            ..Self::practical(cfg)
        })
    }

    /// Settings that work at desk scale. The theoretical learning rate makes
    /// the perturbation dwarf every loss difference, and a small β lets one
    /// lucky exploitation round inflate r/q to many times c0, after which the
    /// lucky line is never dropped. η is tied to δ² so that rescaling the
    /// data together with the lattice leaves every decision unchanged.
    pub fn practical(cfg: &ModelConfig) -> Self {
        GreedyParams {
            epsilon: 0.8,
            alpha: cfg.constants.c0,
            beta: 0.999,
            eta: PRACTICAL_ETA_SCALE / (cfg.spacing * cfg.spacing),
            backfill: Backfill::Replay,
            vocabulary_cap: 48,
            exhaustive_limit: 6000,
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |what: &str, v: f64| {
            Err(LearnerError::Model(crate::model::ModelError::InvalidParameter(format!(
                "{what} = {v}"
            ))))
        };
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("ε", self.epsilon);
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("α", self.alpha);
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("β", self.beta);
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(LearnerError::InvalidEta(self.eta));
        }
        if self.vocabulary_cap == 0 {
            return bad("vocabulary cap", 0.0);
        }
        Ok(())
    }
}

/// One-segment initial line along the first principal component of the
/// sample, endpoints snapped to the grid.
///
/// If both endpoints snap to the same lattice point, the second one moves to
/// the nearest other lattice point.
pub fn init_first_pc(points: &[Point], grid: &LatticeGrid) -> Result<PolygonalLine, LearnerError> {
    if points.len() < 2 {
        return Err(LearnerError::StreamTooShort {
            got: points.len(),
            need: 2,
        });
    }
    let (a, b) = first_pc_segment(points).ok_or(LearnerError::DegenerateInit)?;
    let sa = grid.snap(a.coords());
    let mut sb = grid.snap(b.coords());
    if sa == sb {
        sb = nearest_other(grid, b.coords(), sa.coords());
    }
    Ok(PolygonalLine::new(vec![sa, sb])?)
}

fn nearest_other(grid: &LatticeGrid, x: &[f64], exclude: &[f64]) -> Point {
    let mut radius = grid.spacing() * 2.0;
    loop {
        let mut best: Option<(f64, Vec<f64>)> = None;
        grid.visit_within(x, radius, |p| {
            if p != exclude {
                let d = sq_dist(p, x);
                if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                    best = Some((d, p.to_vec()));
                }
            }
            true
        });
        if let Some((_, p)) = best {
            return Point::new(p);
        }
        radius *= 2.0;
    }
}

/// Vertices `start..end` (0-based, end exclusive) of a line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexRun {
    pub start: usize,
    pub end: usize,
}

impl VertexRun {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Longest contiguous run of vertices satisfying `inside`; the first one on
/// ties.
pub fn find_run(f: &PolygonalLine, inside: impl Fn(&[f64]) -> bool) -> Option<VertexRun> {
    let mut best: Option<VertexRun> = None;
    let mut start = None;
    for i in 0..=f.vertex_count() {
        let hit = i < f.vertex_count() && inside(f.vertex(i));
        match (hit, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|b| i - s > b.len()) {
                    best = Some(VertexRun { start: s, end: i });
                }
                start = None;
            }
            _ => {}
        }
    }
    best
}

/// U(f_prev) for an explicit local grid: the in-grid run is replaced by
/// every sequence of m distinct local-grid points, m ∈ {run−1, run, run+1},
/// m ≥ 1. Lines are kept if they have between 1 and p segments, length at
/// most L and pairwise-distinct vertices; they are returned canonicalized,
/// deduplicated and sorted, f_prev (canonical) always among them.
pub fn build_neighborhood(f_prev: &PolygonalLine, localgrid: &[Point], cfg: &ModelConfig) -> Vec<PolygonalLine> {
    let run = find_run(f_prev, |v| localgrid.iter().any(|q| q.coords() == v));
    match run {
        None => vec![f_prev.canonical()],
        Some(run) => replace_run(f_prev, run, localgrid, cfg, usize::MAX),
    }
}

fn permutations(n: usize, m: usize) -> usize {
    if m > n {
        return 0;
    }
    (n - m + 1..=n).fold(1usize, |acc, k| acc.saturating_mul(k))
}

/// Replacement counts allowed for a run of length `r`.
fn replacement_counts(r: usize) -> impl Iterator<Item = usize> {
    [r.saturating_sub(1), r, r + 1].into_iter().filter(|&m| m >= 1)
}

/// Lines obtained from `f_prev` by replacing `run` with vertices from
/// `vocab`; exhaustive when the raw count is at most `exhaustive_limit`,
/// single-vertex edits otherwise.
pub fn replace_run(
    f_prev: &PolygonalLine,
    run: VertexRun,
    vocab: &[Point],
    cfg: &ModelConfig,
    exhaustive_limit: usize,
) -> Vec<PolygonalLine> {
    let verts: Vec<&[f64]> = f_prev.vertices().collect();
    let prefix = &verts[..run.start];
    let suffix = &verts[run.end..];
    let limit = cfg.length_budget * (1.0 + LENGTH_TOL);
    let path_len = |vs: &[&[f64]]| vs.windows(2).map(|w| sq_dist(w[0], w[1]).sqrt()).sum::<f64>();
    let fixed = path_len(prefix) + path_len(suffix);
    let flank = prefix.len() + suffix.len();
    let counts: Vec<usize> = replacement_counts(run.len())
        .filter(|&m| (1..=cfg.max_segments).contains(&(flank + m - 1)))
        .collect();
    let raw: usize = counts.iter().fold(0usize, |acc, &m| acc.saturating_add(permutations(vocab.len(), m)));

    let mut out: Vec<PolygonalLine> = vec![f_prev.canonical()];
    let mut emit = |middle: &[&[f64]]| {
        let mut coords = Vec::with_capacity((flank + middle.len()) * f_prev.dim());
        for v in prefix.iter().chain(middle).chain(suffix) {
            coords.extend_from_slice(v);
        }
        if let Ok(f) = PolygonalLine::from_flat(f_prev.dim(), coords) {
            if f.length() <= limit && f.has_distinct_vertices() {
                out.push(f.canonical());
            }
        }
    };

    if raw <= exhaustive_limit {
        let vocab: Vec<&[f64]> = vocab.iter().map(|p| p.coords()).collect();
        for &m in &counts {
            let mut middle: Vec<&[f64]> = Vec::with_capacity(m);
            let mut used = vec![false; vocab.len()];
            extend_middle(&vocab, m, prefix.last().copied(), suffix.first().copied(), fixed, limit, &mut middle, &mut used, 0.0, &mut emit);
        }
    } else {
        let run_verts = &verts[run.start..run.end];
        for &m in &counts {
            if m + 1 == run.len() {
                for skip in 0..run.len() {
                    let middle: Vec<&[f64]> = run_verts.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, v)| *v).collect();
                    emit(&middle);
                }
            } else if m == run.len() {
                for pos in 0..run.len() {
                    for q in vocab {
                        let mut middle = run_verts.to_vec();
                        middle[pos] = q.coords();
                        emit(&middle);
                    }
                }
            } else {
                for pos in 0..=run.len() {
                    for q in vocab {
                        let mut middle = run_verts.to_vec();
                        middle.insert(pos, q.coords());
                        emit(&middle);
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| a.canonical_cmp(b));
    out.dedup();
    out
}

/// Depth-first generation of the replacement sequence with length pruning:
/// the straight hop from the last vertex to the right flank bounds the rest.
#[allow(clippy::too_many_arguments)]
fn extend_middle<'a>(
    vocab: &[&'a [f64]],
    m: usize,
    left: Option<&'a [f64]>,
    right: Option<&[f64]>,
    fixed: f64,
    limit: f64,
    middle: &mut Vec<&'a [f64]>,
    used: &mut [bool],
    inner: f64,
    emit: &mut impl FnMut(&[&[f64]]),
) {
    if middle.len() == m {
        emit(middle);
        return;
    }
    let last = middle.last().copied().or(left);
    for i in 0..vocab.len() {
        if used[i] {
            continue;
        }
        let q = vocab[i];
        let hop = last.map_or(0.0, |l| sq_dist(l, q).sqrt());
        let closing = right.map_or(0.0, |r| sq_dist(q, r).sqrt());
        if fixed + inner + hop + closing > limit {
            continue;
        }
        used[i] = true;
        middle.push(q);
        extend_middle(vocab, m, left, right, fixed, limit, middle, used, inner + hop, emit);
        middle.pop();
        used[i] = false;
    }
}

/// True when `chosen` equals `prev` with only the vertices of `run` replaced
/// by between run−1 and run+1 new ones, up to reversal.
pub fn is_local_update(prev: &PolygonalLine, chosen: &PolygonalLine, run: VertexRun) -> bool {
    let pv: Vec<&[f64]> = prev.vertices().collect();
    let check = |cv: &[&[f64]]| {
        let flank = run.start + (pv.len() - run.end);
        if cv.len() < flank || cv.len() + 1 < flank + run.len() || cv.len() > flank + run.len() + 1 {
            return false;
        }
        cv[..run.start] == pv[..run.start] && cv[cv.len() - (pv.len() - run.end)..] == pv[run.end..]
    };
    let forward: Vec<&[f64]> = chosen.vertices().collect();
    let backward: Vec<&[f64]> = chosen.vertices().rev().collect();
    check(&forward) || check(&backward)
}

/// Round type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// First round: the initial line is played and every reward observed.
    Initial,
    Explore,
    Exploit,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Initial => "initial",
            Phase::Explore => "explore",
            Phase::Exploit => "exploit",
        }
    }

    fn full_information(&self) -> bool {
        !matches!(self, Phase::Exploit)
    }
}

/// Audit entry for one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based index of the observation in the stream.
    pub t: usize,
    /// 1-based learner round; `t` = round + t0.
    pub round: usize,
    pub x: Point,
    pub phase: Phase,
    pub chosen: PolygonalLine,
    /// c0 − loss.
    pub reward: f64,
    /// Mixture win probability of the chosen line; absent in the first round.
    pub win_probability: Option<f64>,
    pub loss: f64,
    /// Size of the availability set.
    pub available: usize,
    pub pool_size: usize,
    /// Vertex run of the previous line that the neighborhood replaces.
    pub replaced_run: Option<VertexRun>,
}

/// Reward estimates of one round.
#[derive(Clone, Debug, PartialEq)]
pub enum RewardUpdate {
    /// Every pool member observed its reward.
    Full(Vec<f64>),
    /// Only the chosen line carries an estimate of its own.
    Partial { chosen: usize, chosen_value: f64, others: f64 },
}

/// Reward estimates for a round: exact rewards in full-information rounds;
/// in exploitation rounds r/q for the chosen line when q > β, α for every
/// other line.
pub fn estimate_round_rewards(
    pool: &[PolygonalLine],
    x: &Point,
    c0: f64,
    chosen: usize,
    reward: f64,
    phase: Phase,
    win_prob: Option<f64>,
    params: &GreedyParams,
) -> Result<RewardUpdate, LearnerError> {
    if phase.full_information() {
        let r = |f: &PolygonalLine| c0 - f.sq_dist_to(x.coords());
        let rewards = if pool.len() >= PAR_THRESHOLD {
            pool.par_iter().map(r).collect()
        } else {
            pool.iter().map(r).collect()
        };
        return Ok(RewardUpdate::Full(rewards));
    }
    let q = win_prob.unwrap_or(0.0);
    let chosen_value = if q > params.beta {
        if !(q > 0.0 && q.is_finite()) {
            return Err(LearnerError::InconsistentWinProbability(q));
        }
        reward / q
    } else {
        params.alpha
    };
    Ok(RewardUpdate::Partial {
        chosen,
        chosen_value,
        others: params.alpha,
    })
}

/// Learner state between rounds.
#[derive(Clone, Debug)]
pub struct GreedyState {
    cfg: ModelConfig,
    params: GreedyParams,
    grid: LatticeGrid,
    pool: Vec<PolygonalLine>,
    index: HashMap<PolygonalLine, usize>,
    penalties: Vec<f64>,
    /// Σ_s r̂_{f,s} per pool member.
    estimates: Vec<f64>,
    previous: usize,
    history: Vec<Point>,
    /// History positions of the full-information rounds.
    full_info: Vec<usize>,
    exploit_rounds: usize,
    round: usize,
    rng: ChaCha8Rng,
}

/// Initializes on the first t0 observations.
pub fn greedy_init(head: &[Point], cfg: &ModelConfig, params: GreedyParams, seed: u64) -> Result<GreedyState, LearnerError> {
    params.validate()?;
    let grid = cfg.grid();
    let first = init_first_pc(head, &grid)?.canonical();
    let mut state = GreedyState {
        cfg: cfg.clone(),
        params,
        grid,
        pool: Vec::new(),
        index: HashMap::new(),
        penalties: Vec::new(),
        estimates: Vec::new(),
        previous: 0,
        history: head.to_vec(),
        full_info: Vec::new(),
        exploit_rounds: 0,
        round: 0,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    state.previous = state.insert(first)?;
    Ok(state)
}

impl GreedyState {
    pub fn pool(&self) -> &[PolygonalLine] {
        &self.pool
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn previous(&self) -> &PolygonalLine {
        &self.pool[self.previous]
    }

    pub fn history(&self) -> &[Point] {
        &self.history
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn params(&self) -> &GreedyParams {
        &self.params
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Adds a canonical line if new, backfilling its estimate.
    fn insert(&mut self, f: PolygonalLine) -> Result<usize, LearnerError> {
        if let Some(&i) = self.index.get(&f) {
            return Ok(i);
        }
        // the initial line may exceed p segments only if p = 0, which config rejects
        let h = penalty_for_segments(f.segment_count(), &self.cfg)?;
        let c0 = self.cfg.constants.c0;
        let backfill = match self.params.backfill {
            Backfill::Replay => {
                self.full_info
                    .iter()
                    .map(|&s| c0 - f.sq_dist_to(self.history[s].coords()))
                    .sum::<f64>()
                    + self.params.alpha * self.exploit_rounds as f64
            }
            Backfill::Constant => self.params.alpha * self.round as f64,
        };
        let i = self.pool.len();
        self.index.insert(f.clone(), i);
        self.pool.push(f);
        self.penalties.push(h);
        self.estimates.push(backfill);
        Ok(i)
    }

    /// Local grid of the current observation (last in history) with respect
    /// to the previous line, its in-grid run, and the replacement vertices.
    fn neighborhood(&mut self, x: &Point) -> Result<(Vec<usize>, Option<VertexRun>), LearnerError> {
        let prev = self.pool[self.previous].clone();
        let nb = observation_neighborhood(&prev, &self.history, x)?;
        let (center, radius) = (nb.mean.coords().to_vec(), nb.diameter);
        let run = find_run(&prev, |v| self.grid.ball_contains(&center, radius, v));
        let lines = match run {
            None => vec![prev.clone()],
            Some(run) => {
                let (vocab, complete) = self.vocabulary(&center, radius, x);
                // a truncated vocabulary only supports single-vertex edits
                let limit = if complete { self.params.exhaustive_limit } else { 0 };
                if vocab.is_empty() {
                    vec![prev.clone()]
                } else {
                    replace_run(&prev, run, &vocab, &self.cfg, limit)
                }
            }
        };
        let mut members = Vec::with_capacity(lines.len());
        for f in lines {
            members.push(self.insert(f)?);
        }
        members.sort_unstable();
        members.dedup();
        Ok((members, run))
    }

    /// The local grid if it has at most `vocabulary_cap` points, otherwise
    /// its `vocabulary_cap` points nearest to `x`. The flag tells whether the
    /// whole local grid was returned.
    fn vocabulary(&self, center: &[f64], radius: f64, x: &Point) -> (Vec<Point>, bool) {
        let cap = self.params.vocabulary_cap;
        if self.grid.count_within(center, radius, cap) <= cap {
            return (self.grid.points_within(center, radius), true);
        }
        let reach = radius + sq_dist(center, x.coords()).sqrt();
        let mut r = self.grid.spacing();
        loop {
            let mut found: Vec<(f64, Vec<f64>)> = Vec::new();
            self.grid.visit_within(x.coords(), r, |p| {
                if self.grid.ball_contains(center, radius, p) {
                    found.push((sq_dist(p, x.coords()), p.to_vec()));
                }
                true
            });
            if found.len() >= cap || r > reach {
                // stable sort keeps lexicographic order among equidistant points
                found.sort_by(|a, b| a.0.total_cmp(&b.0));
                found.truncate(cap);
                return (found.into_iter().map(|(_, p)| Point::new(p)).collect(), false);
            }
            r *= 2.0;
        }
    }

    fn scores(&self) -> Vec<f64> {
        let eta = self.params.eta;
        self.estimates.iter().zip(&self.penalties).map(|(s, h)| s - h / eta).collect()
    }

    fn apply(&mut self, update: RewardUpdate) {
        match update {
            RewardUpdate::Full(r) => {
                for (e, v) in self.estimates.iter_mut().zip(r) {
                    *e += v;
                }
            }
            RewardUpdate::Partial {
                chosen,
                chosen_value,
                others,
            } => {
                for (i, e) in self.estimates.iter_mut().enumerate() {
                    *e += if i == chosen { chosen_value } else { others };
                }
            }
        }
    }
}

/// Index in `candidates` maximizing `values`, ties to the canonically
/// smallest line.
fn argmax_canonical(candidates: &[usize], values: &[f64], pool: &[PolygonalLine]) -> usize {
    let mut best = candidates[0];
    for &i in &candidates[1..] {
        match values[i].total_cmp(&values[best]) {
            Ordering::Greater => best = i,
            Ordering::Equal if pool[i].canonical_cmp(&pool[best]) == Ordering::Less => best = i,
            _ => {}
        }
    }
    best
}

/// Plays one round on observation `x`.
pub fn greedy_round(state: &mut GreedyState, x: &Point) -> Result<RoundRecord, LearnerError> {
    let dim = state.cfg.dim;
    if x.dim() != dim {
        return Err(crate::geometry::GeometryError::DimensionMismatch {
            expected: dim,
            got: x.dim(),
        }
        .into());
    }
    let c0 = state.cfg.constants.c0;
    state.history.push(x.clone());
    state.round += 1;
    let round = state.round;
    let position = state.history.len() - 1;

    let (phase, chosen, win_prob, available, replaced_run) = if round == 1 {
        (Phase::Initial, state.previous, None, 1, None)
    } else {
        let explore = state.rng.random_bool(state.params.epsilon);
        let (nbhd, run) = state.neighborhood(x)?;
        let eta = state.params.eta;
        let scores = state.scores();
        let perturbed: Vec<f64> = scores.iter().map(|g| g + draw_exp1(&mut state.rng) / eta).collect();
        let all: Vec<usize> = (0..state.pool.len()).collect();
        let (phase, avail) = if explore { (Phase::Explore, &all) } else { (Phase::Exploit, &nbhd) };
        let chosen = argmax_canonical(avail, &perturbed, &state.pool);
        let eps = state.params.epsilon;
        let mut q = 0.0;
        if eps > 0.0 {
            q += eps * win_probability(&scores, eta, chosen)?;
        }
        if eps < 1.0 {
            if let Ok(pos) = nbhd.binary_search(&chosen) {
                let local: Vec<f64> = nbhd.iter().map(|&i| scores[i]).collect();
                q += (1.0 - eps) * win_probability(&local, eta, pos)?;
            }
        }
        (phase, chosen, Some(q), avail.len(), run)
    };

    let line = state.pool[chosen].clone();
    let loss = line.sq_dist_to(x.coords());
    let reward = c0 - loss;
    let update = estimate_round_rewards(&state.pool, x, c0, chosen, reward, phase, win_prob, &state.params)?;
    state.apply(update);
    if phase.full_information() {
        state.full_info.push(position);
    } else {
        state.exploit_rounds += 1;
    }
    state.previous = chosen;
    Ok(RoundRecord {
        t: position + 1,
        round,
        x: x.clone(),
        phase,
        chosen: line,
        reward,
        win_probability: win_prob,
        loss,
        available,
        pool_size: state.pool.len(),
        replaced_run,
    })
}

/// Initializes on the first t0 points and plays a round on each of the rest.
pub fn run_stream(stream: &[Point], cfg: &ModelConfig, params: GreedyParams, seed: u64) -> Result<Vec<RoundRecord>, LearnerError> {
    let t0 = cfg.init_count;
    if stream.len() <= t0 {
        return Err(LearnerError::StreamTooShort {
            got: stream.len(),
            need: t0 + 1,
        });
    }
    let mut state = greedy_init(&stream[..t0], cfg, params, seed)?;
    stream[t0..].iter().map(|x| greedy_round(&mut state, x)).collect()
}
