//! Follow-the-perturbed-leader over an explicit candidate list, and the
//! closed-form win probability under fresh exponential perturbations.

use std::cmp::Ordering;
use std::f64::consts::E;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Point, PolygonalLine};
use crate::model::{ModelConfig, ModelError};

/// Candidate counts above this are scored in parallel.
const PAR_THRESHOLD: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("learning rate must be positive and finite, got {0}")]
    InvalidEta(f64),
    #[error("index {index} out of range for {len} candidates")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{what}: expected {expected} entries, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("perturbations must be positive and finite")]
    InvalidPerturbation,
    #[error("stream has {got} points, need at least {need}")]
    StreamTooShort { got: usize, need: usize },
    #[error("initial sample has no spread")]
    DegenerateInit,
    #[error("chosen action claims a win probability above β but it is {0}")]
    InconsistentWinProbability(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// η_t = √(c1·p + c2·L + c3) / (c0·√((e−1)·t)), with η_0 = η_1.
pub fn eta_schedule(t: usize, cfg: &ModelConfig) -> f64 {
    let t = t.max(1) as f64;
    cfg.complexity_budget().sqrt() / (cfg.constants.c0 * ((E - 1.0) * t).sqrt())
}

/// Learning-rate sequence of the exact learner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EtaSchedule {
    /// Fixed η; the rebalancing term vanishes.
    Constant(f64),
    /// η_t = initial/√t for t ≥ 1 and η_0 = initial.
    InverseSqrt { initial: f64 },
}

impl EtaSchedule {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        EtaSchedule::InverseSqrt {
            initial: eta_schedule(0, cfg),
        }
    }

    pub fn at(&self, t: usize) -> f64 {
        match *self {
            EtaSchedule::Constant(eta) => eta,
            EtaSchedule::InverseSqrt { initial } => initial / (t.max(1) as f64).sqrt(),
        }
    }

    fn validate(&self) -> Result<(), LearnerError> {
        let eta = match *self {
            EtaSchedule::Constant(eta) => eta,
            EtaSchedule::InverseSqrt { initial } => initial,
        };
        if eta > 0.0 && eta.is_finite() {
            Ok(())
        } else {
            Err(LearnerError::InvalidEta(eta))
        }
    }
}

/// Draws one Exp(1) variate, rejecting the measure-zero value 0.
pub fn draw_exp1(rng: &mut impl Rng) -> f64 {
    loop {
        let z: f64 = rng.sample(Exp1);
        if z > 0.0 {
            return z;
        }
    }
}

/// One Exp(1) perturbation per candidate, drawn once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTable {
    seed: Option<u64>,
    values: Vec<f64>,
}

impl PerturbationTable {
    pub fn draw(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n).map(|_| draw_exp1(&mut rng)).collect();
        PerturbationTable {
            seed: Some(seed),
            values,
        }
    }

    /// A table with given entries, e.g. to share one realization between
    /// two implementations.
    pub fn from_values(values: Vec<f64>) -> Result<Self, LearnerError> {
        if values.iter().any(|z| !(*z > 0.0 && z.is_finite())) {
            return Err(LearnerError::InvalidPerturbation);
        }
        Ok(PerturbationTable { seed: None, values })
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Outcome of one exact-mode round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactStep {
    /// 1-based round index.
    pub t: usize,
    pub chosen: usize,
    pub loss: f64,
}

/// State of the exact learner: candidates with their penalties,
/// perturbations and cumulative perturbed losses.
#[derive(Clone, Debug)]
pub struct ExactLearnerState {
    candidates: Vec<PolygonalLine>,
    penalties: Vec<f64>,
    perturbations: PerturbationTable,
    cumulative: Vec<f64>,
    schedule: EtaSchedule,
    /// Observations absorbed so far.
    round: usize,
    /// Position of each candidate in canonical order, for tie-breaking.
    rank: Vec<usize>,
    initial_choice: usize,
}

/// Initializes with a freshly drawn perturbation table.
pub fn ftpl_init(
    candidates: Vec<PolygonalLine>,
    penalties: Vec<f64>,
    schedule: EtaSchedule,
    seed: u64,
) -> Result<ExactLearnerState, LearnerError> {
    let table = PerturbationTable::draw(candidates.len(), seed);
    ftpl_init_with(candidates, penalties, schedule, table)
}

/// Initializes with Δ_{f,0} = (h(f) − z_f)/η_0.
pub fn ftpl_init_with(
    candidates: Vec<PolygonalLine>,
    penalties: Vec<f64>,
    schedule: EtaSchedule,
    perturbations: PerturbationTable,
) -> Result<ExactLearnerState, LearnerError> {
    if candidates.is_empty() {
        return Err(LearnerError::EmptyCandidates);
    }
    schedule.validate()?;
    let n = candidates.len();
    for (what, got) in [("penalties", penalties.len()), ("perturbations", perturbations.len())] {
        if got != n {
            return Err(LearnerError::LengthMismatch {
                what,
                expected: n,
                got,
            });
        }
    }
    let eta0 = schedule.at(0);
    let cumulative: Vec<f64> = penalties
        .iter()
        .zip(perturbations.values())
        .map(|(h, z)| (h - z) / eta0)
        .collect();
    let canon: Vec<PolygonalLine> = candidates.iter().map(|f| f.canonical()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| canon[a].canonical_cmp(&canon[b]).then(a.cmp(&b)));
    let mut rank = vec![0; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let mut state = ExactLearnerState {
        candidates,
        penalties,
        perturbations,
        cumulative,
        schedule,
        round: 0,
        rank,
        initial_choice: 0,
    };
    state.initial_choice = state.leader();
    Ok(state)
}

/// Index of the smallest entry, ties to the lower rank.
pub(crate) fn argmin_ranked(values: &[f64], rank: &[usize]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        match values[i].total_cmp(&values[best]) {
            Ordering::Less => best = i,
            Ordering::Equal if rank[i] < rank[best] => best = i,
            _ => {}
        }
    }
    best
}

impl ExactLearnerState {
    pub fn candidates(&self) -> &[PolygonalLine] {
        &self.candidates
    }

    pub fn penalties(&self) -> &[f64] {
        &self.penalties
    }

    pub fn perturbations(&self) -> &PerturbationTable {
        &self.perturbations
    }

    /// Σ_{s ≤ t} Δ_{f,s} for every candidate, t being [`Self::round`].
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn schedule(&self) -> EtaSchedule {
        self.schedule
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// f̂_0, the minimizer of the initial perturbed penalties.
    pub fn initial_choice(&self) -> usize {
        self.initial_choice
    }

    /// Current minimizer of the cumulative sums, i.e. the next prediction.
    pub fn leader(&self) -> usize {
        argmin_ranked(&self.cumulative, &self.rank)
    }

    /// Δ_{f,t} for the next round t = round + 1 on observation `x`.
    pub fn increments(&self, x: &Point) -> Result<Vec<f64>, LearnerError> {
        let dim = self.candidates[0].dim();
        if x.dim() != dim {
            return Err(GeometryError::DimensionMismatch {
                expected: dim,
                got: x.dim(),
            }
            .into());
        }
        let t = self.round + 1;
        let rebalance = 1.0 / self.schedule.at(t) - 1.0 / self.schedule.at(t - 1);
        let term = |i: usize| {
            let f = &self.candidates[i];
            let mut d = f.sq_dist_to(x.coords());
            if rebalance != 0.0 {
                d += rebalance * (self.penalties[i] - self.perturbations.values()[i]);
            }
            d
        };
        let n = self.candidates.len();
        Ok(if n >= PAR_THRESHOLD {
            (0..n).into_par_iter().map(term).collect()
        } else {
            (0..n).map(term).collect()
        })
    }

    fn absorb(&mut self, increments: &[f64]) {
        for (c, d) in self.cumulative.iter_mut().zip(increments) {
            *c += d;
        }
        self.round += 1;
    }
}

/// Predicts with the current leader, then absorbs `x`.
pub fn ftpl_step(state: &mut ExactLearnerState, x: &Point) -> Result<ExactStep, LearnerError> {
    let chosen = state.leader();
    let inc = state.increments(x)?;
    let loss = state.candidates[chosen].sq_dist_to(x.coords());
    state.absorb(&inc);
    Ok(ExactStep {
        t: state.round,
        chosen,
        loss,
    })
}

/// Runs [`ftpl_step`] over a whole stream.
pub fn ftpl_run(state: &mut ExactLearnerState, stream: &[Point]) -> Result<Vec<ExactStep>, LearnerError> {
    stream.iter().map(|x| ftpl_step(state, x)).collect()
}

/// The forecaster that sees round t's loss before predicting.
#[derive(Clone, Debug, PartialEq)]
pub struct PeekAhead {
    /// f̂*_0, …, f̂*_T as candidate indices.
    pub choices: Vec<usize>,
    /// Σ_t Δ_{f̂*_t, t}.
    pub peek_total: f64,
    /// Σ_t Δ_{f̂*_T, t}.
    pub hindsight_total: f64,
}

/// Minimizers of Σ_{s ≤ t} Δ_{f,s} for t = 0..=T, starting from `state`
/// (which is not modified).
pub fn peek_ahead_sequence(state: &ExactLearnerState, stream: &[Point]) -> Result<PeekAhead, LearnerError> {
    let mut st = state.clone();
    let mut rows: Vec<Vec<f64>> = vec![st.cumulative.clone()];
    let mut choices = vec![st.leader()];
    for x in stream {
        let inc = st.increments(x)?;
        st.absorb(&inc);
        rows.push(inc);
        choices.push(st.leader());
    }
    let last = *choices.last().expect("at least one choice");
    let peek_total = rows.iter().zip(&choices).map(|(r, &c)| r[c]).sum();
    let hindsight_total = rows.iter().map(|r| r[last]).sum();
    Ok(PeekAhead {
        choices,
        peek_total,
        hindsight_total,
    })
}

/// Drops factors whose deviation from 1 is below double precision.
const NEGLIGIBLE_FACTOR: f64 = 1e-18;
/// e^{-745} underflows to 0.
const UNDERFLOW_EXPONENT: f64 = 745.0;

/// Probability that `index` attains the maximum of G_g + z_g/η over fresh
/// i.i.d. Exp(1) draws z_g.
///
/// With c_g = η(G_f − G_g) the probability is
/// ∫₀^∞ e^{−z} ∏_{g≠f} (1 − e^{−(z + c_g)})₊ dz. Every factor is positive past
/// z_lo = max(0, max_g −c_g), and u = e^{−(z − z_lo)} turns the rest into
/// e^{−z_lo} ∫₀¹ ∏_g (1 − a_g·u) du with a_g = e^{−(z_lo + c_g)} ∈ (0, 1].
pub fn win_probability(scores: &[f64], eta: f64, index: usize) -> Result<f64, LearnerError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(LearnerError::InvalidEta(eta));
    }
    if index >= scores.len() {
        return Err(LearnerError::IndexOutOfRange {
            index,
            len: scores.len(),
        });
    }
    let gf = scores[index];
    let mut z_lo = 0.0f64;
    for (g, &s) in scores.iter().enumerate() {
        if g != index {
            z_lo = z_lo.max(eta * (s - gf));
        }
    }
    if z_lo > UNDERFLOW_EXPONENT {
        return Ok(0.0);
    }
    let mut coeffs: Vec<f64> = Vec::with_capacity(scores.len());
    for (g, &s) in scores.iter().enumerate() {
        if g == index {
            continue;
        }
        let a = (-(z_lo + eta * (gf - s))).exp();
        if a >= NEGLIGIBLE_FACTOR {
            coeffs.push(a);
        }
    }
    let integrand = |u: f64| coeffs.iter().fold(1.0, |acc, a| acc * (1.0 - a * u));
    let integral = integrate_unit(&integrand);
    Ok(((-z_lo).exp() * integral).clamp(0.0, 1.0))
}

/// Win probabilities of every index.
pub fn win_probabilities(scores: &[f64], eta: f64) -> Result<Vec<f64>, LearnerError> {
    (0..scores.len()).map(|i| win_probability(scores, eta, i)).collect()
}

// 7-point Gauss / 15-point Kronrod nodes on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod on [0, 1] to absolute tolerance 1e-14.
fn integrate_unit(f: &impl Fn(f64) -> f64) -> f64 {
    const TOL: f64 = 1e-14;
    const MAX_DEPTH: u32 = 48;
    let mut total = 0.0;
    let mut stack = vec![(0.0, 1.0, 0u32)];
    while let Some((a, b, depth)) = stack.pop() {
        let (val, err) = gauss_kronrod(f, a, b);
        if err <= TOL * (b - a) || depth >= MAX_DEPTH {
            total += val;
        } else {
            let m = 0.5 * (a + b);
            stack.push((m, b, depth + 1));
            stack.push((a, m, depth + 1));
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn pts(vs: &[f64]) -> Vec<Point> {
        vs.iter().map(|&v| Point::new(vec![v])).collect()
    }

    fn seg(a: f64, b: f64) -> PolygonalLine {
        PolygonalLine::new(pts(&[a, b])).unwrap()
    }

    #[test]
    fn eta_schedule_shape() {
        let cfg = ModelConfig::new(2, 1.0, 1.0, 2, 2.0, 3).unwrap();
        assert_eq!(eta_schedule(0, &cfg), eta_schedule(1, &cfg));
        assert!((eta_schedule(4, &cfg) - eta_schedule(1, &cfg) / 2.0).abs() < 1e-15);
        let c = cfg.constants;
        let direct = (c.c1 * 2.0 + c.c2 * 2.0 + c.c3).sqrt() / (c.c0 * (E - 1.0).sqrt());
        assert!((eta_schedule(1, &cfg) - direct).abs() < 1e-15);
        for t in 1..50 {
            assert!(eta_schedule(t + 1, &cfg) < eta_schedule(t, &cfg));
        }
    }

    #[test]
    fn init_picks_largest_perturbation_on_equal_penalties() {
        let table = PerturbationTable::from_values(vec![2.0, 0.5]).unwrap();
        let st = ftpl_init_with(vec![seg(0.0, 1.0), seg(1.0, 2.0)], vec![1.0, 1.0], EtaSchedule::Constant(1.0), table)
            .unwrap();
        assert_eq!(st.initial_choice(), 0);
        let st = ftpl_init(vec![seg(0.0, 1.0)], vec![3.0], EtaSchedule::Constant(0.1), 9).unwrap();
        assert_eq!(st.leader(), 0);
        assert!(ftpl_init(vec![], vec![], EtaSchedule::Constant(1.0), 1).is_err());
    }

    #[test]
    fn seeded_tables_replay() {
        assert_eq!(PerturbationTable::draw(50, 4), PerturbationTable::draw(50, 4));
        assert_ne!(PerturbationTable::draw(50, 4), PerturbationTable::draw(50, 5));
        assert!(PerturbationTable::draw(1000, 1).values().iter().all(|&z| z > 0.0));
    }

    #[test]
    fn step_predicts_before_absorbing() {
        // cumulative sums A = 5, B = 3 via penalties with zero-ish perturbation
        let table = PerturbationTable::from_values(vec![1e-9, 1e-9]).unwrap();
        let mut st = ftpl_init_with(
            vec![seg(0.0, 1.0), seg(5.0, 6.0)],
            vec![5.0, 3.0],
            EtaSchedule::Constant(1.0),
            table,
        )
        .unwrap();
        let step = ftpl_step(&mut st, &Point::new(vec![0.5])).unwrap();
        assert_eq!(step.chosen, 1);
        assert_eq!(step.loss, 4.5 * 4.5);
        // constant η: the increment is the bare loss
        assert!((st.cumulative()[0] - (5.0 - 1e-9)).abs() < 1e-12);
        assert!((st.cumulative()[1] - (3.0 - 1e-9 + 20.25)).abs() < 1e-12);
    }

    #[test]
    fn rebalancing_term_follows_schedule() {
        let table = PerturbationTable::from_values(vec![0.7]).unwrap();
        let sched = EtaSchedule::InverseSqrt { initial: 0.5 };
        let mut st = ftpl_init_with(vec![seg(0.0, 1.0)], vec![2.0], sched, table).unwrap();
        let x = Point::new(vec![3.0]);
        ftpl_step(&mut st, &x).unwrap();
        ftpl_step(&mut st, &x).unwrap();
        let telescoped = 2.0 * 4.0 + (2.0 - 0.7) / sched.at(2);
        assert!((st.cumulative()[0] - telescoped).abs() < 1e-12);
    }

    #[test]
    fn heavy_loss_forces_rejection() {
        let table = PerturbationTable::draw(3, 11);
        let spread = table.values().iter().cloned().fold(0.0, f64::max);
        let mut st = ftpl_init_with(
            vec![seg(0.0, 1.0), seg(10.0, 11.0), seg(-3.0, -2.0)],
            vec![0.0; 3],
            EtaSchedule::Constant(1.0),
            table,
        )
        .unwrap();
        // every observation is far from the second candidate only
        let stream = pts(&[0.5; 4]);
        ftpl_run(&mut st, &stream).unwrap();
        assert!(st.cumulative()[1] - st.cumulative()[0] > spread);
        assert_ne!(st.leader(), 1);
    }

    #[test]
    fn peek_ahead_basics() {
        let st = ftpl_init(vec![seg(0.0, 1.0), seg(1.0, 2.0)], vec![1.0, 1.0], EtaSchedule::Constant(0.5), 3).unwrap();
        let pa = peek_ahead_sequence(&st, &[]).unwrap();
        assert_eq!(pa.choices, vec![st.initial_choice()]);
        let pa = peek_ahead_sequence(&st, &pts(&[0.2; 30])).unwrap();
        assert!(pa.choices[5..].iter().all(|&c| c == 0));
        assert!(pa.peek_total <= pa.hindsight_total + 1e-12);
    }

    #[test]
    fn win_probability_examples() {
        assert_eq!(win_probability(&[3.0], 1.0, 0).unwrap(), 1.0);
        let p = win_probability(&[1.0, 1.0], 2.0, 0).unwrap();
        assert!((p - 0.5).abs() < 1e-14);
        let c = std::f64::consts::LN_2;
        let p = win_probability(&[c, 0.0], 1.0, 1).unwrap();
        assert!((p - 0.25).abs() < 1e-14);
        assert!(win_probability(&[1.0], 0.0, 0).is_err());
        assert!(win_probability(&[1.0], 1.0, 1).is_err());
    }

    /// Direct z-integration with composite Simpson on a long window.
    fn z_integral(scores: &[f64], eta: f64, index: usize) -> f64 {
        let gf = scores[index];
        let n = 400_000;
        let upper = 60.0;
        let h = upper / n as f64;
        let g = |z: f64| {
            let mut v = (-z).exp();
            for (j, &s) in scores.iter().enumerate() {
                if j != index {
                    v *= (1.0 - (-(z + eta * (gf - s))).exp()).max(0.0);
                }
            }
            v
        };
        let mut acc = g(0.0) + g(upper);
        for i in 1..n {
            acc += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn win_probability_matches_direct_integration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 2..=7 {
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let eta = rng.random_range(0.3..3.0);
            let probs = win_probabilities(&scores, eta).unwrap();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..n {
                // the integrand has kinks at the breakpoints, so Simpson is only ~1e-7 accurate
                assert!((probs[i] - z_integral(&scores, eta, i)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn win_probability_extremes() {
        let p = win_probability(&[0.0, 1000.0], 1.0, 0).unwrap();
        assert_eq!(p, 0.0);
        let p = win_probability(&[1000.0, 0.0], 1.0, 0).unwrap();
        assert_eq!(p, 1.0);
        // many tied competitors
        let scores = vec![0.0; 500];
        let p = win_probability(&scores, 1.0, 7).unwrap();
        assert!((p - 1.0 / 500.0).abs() < 1e-12);
    }
}
