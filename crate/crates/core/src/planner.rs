//! Optimistic planning over a finite policy pool.
//!
//! Every planning quantity is an expectation over trajectories drawn from
//! the estimated kernel. [`PoolEvaluation`] enumerates each pool policy's
//! trajectory law once per episode, interns the trajectories in a catalog and
//! caches per-trajectory features and bonuses, so that all `|pool|^2`
//! expectations reduce to small weighted sums. [`expected_pair_score`] is the
//! direct, uncached path and serves as the reference implementation.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PbrlError, Result};
use crate::estimator::ConfidenceEllipsoid;
use crate::mdp::{distribution_under, dot, sample_rollout_under, MarkovPolicy, PolicyPool, TransitionTable, Trajectory};
use crate::preference::{antisymmetric, Estimate, TrajectoryFeatureMap};

/// Slack on the membership threshold.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Largest `|S_k|^n` searched exhaustively for n-wise selection.
pub const DEFAULT_TUPLE_CAP: usize = 1_000_000;

/// Which components enter the planning scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreToggles {
    pub estimate: bool,
    /// `b_T` for preferences, `b_G` for trajectory feedback.
    pub comparison_bonus: bool,
    pub transition_bonus: bool,
}

impl Default for ScoreToggles {
    fn default() -> Self {
        Self {
            estimate: true,
            comparison_bonus: true,
            transition_bonus: true,
        }
    }
}

impl ScoreToggles {
    pub fn no_bonus() -> Self {
        Self {
            estimate: true,
            comparison_bonus: false,
            transition_bonus: false,
        }
    }
}

/// What the trajectory-level ellipsoid estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnedTarget {
    /// `T(t1, t2) = 1/2 + (x(t1) - x(t2))^T theta`.
    Preference,
    /// `g(t) = x(t)^T theta`.
    Feedback,
}

impl LearnedTarget {
    /// Membership threshold of the near-optimal set.
    pub fn threshold(self) -> f64 {
        match self {
            LearnedTarget::Preference => 0.5,
            LearnedTarget::Feedback => 0.0,
        }
    }
}

/// Read-only snapshot of everything the planner needs in one episode.
#[derive(Clone, Debug)]
pub struct PlanningModel {
    /// Estimated kernel, already projected onto the simplex.
    pub table: TransitionTable,
    pub horizon: usize,
    pub initial_state: usize,
    pub features: TrajectoryFeatureMap,
    pub ellipsoid: ConfidenceEllipsoid,
    pub target: LearnedTarget,
    /// Clipped `b_P(s, a)`, laid out as `[s * A + a]`.
    pub sa_bonus: Vec<f64>,
    pub toggles: ScoreToggles,
}

impl PlanningModel {
    pub fn threshold(&self) -> f64 {
        self.target.threshold()
    }

    /// `b_P(tau) = min(1, sum_h b_P(s_h, a_h))`.
    pub fn transition_bonus(&self, traj: &Trajectory) -> f64 {
        if !self.toggles.transition_bonus {
            return 0.0;
        }
        let na = self.table.num_actions();
        traj.steps
            .iter()
            .map(|&(s, a)| self.sa_bonus[s * na + a])
            .sum::<f64>()
            .min(1.0)
    }

    fn pref_estimate_x(&self, x1: &[f64], x2: &[f64]) -> f64 {
        if !self.toggles.estimate {
            return 0.5;
        }
        let theta = self.ellipsoid.center().as_slice();
        let margin = dot(x1, theta) - dot(x2, theta);
        antisymmetric(margin, |m| 0.5 + m)
    }

    fn pair_bonus_x(&self, x1: &[f64], x2: &[f64]) -> f64 {
        if !self.toggles.comparison_bonus {
            return 0.0;
        }
        let diff: Vec<f64> = x1.iter().zip(x2).map(|(a, b)| a - b).collect();
        self.ellipsoid.width(&diff)
    }

    fn feedback_estimate_x(&self, x: &[f64]) -> f64 {
        if !self.toggles.estimate {
            return 0.0;
        }
        self.ellipsoid.predict(x).clamp(0.0, 1.0)
    }

    fn feedback_bonus_x(&self, x: &[f64]) -> f64 {
        if !self.toggles.comparison_bonus {
            return 0.0;
        }
        self.ellipsoid.width(x)
    }

    /// Clipped preference estimate, antisymmetric up to exact `1 - p`.
    pub fn pref_estimate(&self, t1: &Trajectory, t2: &Trajectory) -> f64 {
        self.pref_estimate_x(&self.features.features(t1), &self.features.features(t2))
    }

    /// `b_T(t1, t2)`.
    pub fn pair_bonus(&self, t1: &Trajectory, t2: &Trajectory) -> f64 {
        self.pair_bonus_x(&self.features.features(t1), &self.features.features(t2))
    }

    pub fn feedback_estimate(&self, t: &Trajectory) -> f64 {
        self.feedback_estimate_x(&self.features.features(t))
    }

    /// `b_G(t)`.
    pub fn feedback_bonus(&self, t: &Trajectory) -> f64 {
        self.feedback_bonus_x(&self.features.features(t))
    }

    /// Integrand of the membership test for the pair `(tau, tau0)`.
    pub fn set_score(&self, t: &Trajectory, t0: &Trajectory) -> f64 {
        let bp = self.transition_bonus(t) + self.transition_bonus(t0);
        match self.target {
            LearnedTarget::Preference => self.pref_estimate(t, t0) + self.pair_bonus(t, t0) + bp,
            LearnedTarget::Feedback => {
                self.feedback_estimate(t) - self.feedback_estimate(t0)
                    + self.feedback_bonus(t)
                    + self.feedback_bonus(t0)
                    + bp
            }
        }
    }

    /// Integrand of the pair exploration objective, `b_T + b_P(t1) + b_P(t2)`.
    pub fn exploration_score(&self, t1: &Trajectory, t2: &Trajectory) -> f64 {
        self.pair_bonus(t1, t2) + self.transition_bonus(t1) + self.transition_bonus(t2)
    }

    /// Integrand of the single-policy objective, `b_G + b_P`.
    pub fn single_exploration_score(&self, t: &Trajectory) -> f64 {
        self.feedback_bonus(t) + self.transition_bonus(t)
    }

    fn law(&self, policy: &MarkovPolicy, mode: ExpectationMode, cap: usize, stream: u64) -> Result<Vec<(Trajectory, f64)>> {
        match mode {
            ExpectationMode::Exact => {
                Ok(distribution_under(&self.table, self.horizon, self.initial_state, policy, cap)?.marginal())
            }
            ExpectationMode::MonteCarlo { samples, seed } => {
                if samples == 0 {
                    return Err(PbrlError::InvalidArgument("Monte-Carlo mode needs samples > 0".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                let mut counts: BTreeMap<Trajectory, usize> = BTreeMap::new();
                for _ in 0..samples {
                    let r = sample_rollout_under(&self.table, self.horizon, self.initial_state, policy, &mut rng);
                    *counts.entry(r.trajectory).or_default() += 1;
                }
                Ok(counts
                    .into_iter()
                    .map(|(t, c)| (t, c as f64 / samples as f64))
                    .collect())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExpectationMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// `E_{t1 ~ (P_hat, pi1), t2 ~ (P_hat, pi2)} score(t1, t2)`.
///
/// Exact mode sums over the product of enumerated laws. Monte-Carlo mode
/// draws `samples` independent pairs and reports the standard error.
pub fn expected_pair_score(
    model: &PlanningModel,
    pi1: &MarkovPolicy,
    pi2: &MarkovPolicy,
    score: impl Fn(&Trajectory, &Trajectory) -> f64,
    mode: ExpectationMode,
    cap: usize,
) -> Result<Estimate> {
    match mode {
        ExpectationMode::Exact => {
            let d1 = model.law(pi1, mode, cap, 0)?;
            let d2 = model.law(pi2, mode, cap, 0)?;
            let mut total = 0.0;
            for (t1, p1) in &d1 {
                for (t2, p2) in &d2 {
                    total += p1 * p2 * score(t1, t2);
                }
            }
            Ok(Estimate::exact(total))
        }
        ExpectationMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(PbrlError::InvalidArgument("Monte-Carlo mode needs samples > 0".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (h, s1) = (model.horizon, model.initial_state);
            Ok(Estimate::from_samples((0..samples).map(|_| {
                let t1 = sample_rollout_under(&model.table, h, s1, pi1, &mut rng).trajectory;
                let t2 = sample_rollout_under(&model.table, h, s1, pi2, &mut rng).trajectory;
                score(&t1, &t2)
            })))
        }
    }
}

// ── Cached pool evaluation ──────────────────────────────────────────────

/// All per-episode planning expectations for one pool.
#[derive(Clone, Debug)]
pub struct PoolEvaluation {
    target: LearnedTarget,
    catalog: Vec<Trajectory>,
    laws: Vec<Vec<(usize, f64)>>,
    /// Membership score `E[...]` for every ordered policy pair.
    set_scores: Vec<Vec<f64>>,
    /// Pair exploration objective (preference target).
    pair_objective: Vec<Vec<f64>>,
    /// Single-policy exploration objective (feedback target).
    single_objective: Vec<f64>,
}

impl PoolEvaluation {
    pub fn new(model: &PlanningModel, pool: &PolicyPool, mode: ExpectationMode, cap: usize) -> Result<Self> {
        if pool.is_empty() {
            return Err(PbrlError::EmptyPolicySet);
        }
        let raw_laws = pool
            .policies
            .par_iter()
            .enumerate()
            .map(|(i, pi)| model.law(pi, mode, cap, i as u64))
            .collect::<Result<Vec<_>>>()?;

        let mut index: HashMap<Trajectory, usize> = HashMap::new();
        let mut catalog = Vec::new();
        let laws: Vec<Vec<(usize, f64)>> = raw_laws
            .into_iter()
            .map(|law| {
                law.into_iter()
                    .map(|(t, p)| {
                        let id = *index.entry(t.clone()).or_insert_with(|| {
                            catalog.push(t);
                            catalog.len() - 1
                        });
                        (id, p)
                    })
                    .collect()
            })
            .collect();

        let xs: Vec<Vec<f64>> = catalog.iter().map(|t| model.features.features(t)).collect();
        let bp: Vec<f64> = catalog.iter().map(|t| model.transition_bonus(t)).collect();
        let expect = |law: &[(usize, f64)], v: &[f64]| law.iter().map(|&(u, p)| p * v[u]).sum::<f64>();
        let policy_bp: Vec<f64> = laws.iter().map(|l| expect(l, &bp)).collect();
        let n = laws.len();

        let (set_scores, pair_objective, single_objective) = match model.target {
            LearnedTarget::Preference => {
                let m = catalog.len();
                let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..m)
                    .into_par_iter()
                    .map(|u| {
                        let est = (0..m).map(|v| model.pref_estimate_x(&xs[u], &xs[v])).collect();
                        let bonus = (0..m).map(|v| model.pair_bonus_x(&xs[u], &xs[v])).collect();
                        (est, bonus)
                    })
                    .collect();
                let pair_expect = |i: usize, j: usize, pick: &dyn Fn(usize, usize) -> f64| -> f64 {
                    let mut total = 0.0;
                    for &(u, p) in &laws[i] {
                        let mut inner = 0.0;
                        for &(v, q) in &laws[j] {
                            inner += q * pick(u, v);
                        }
                        total += p * inner;
                    }
                    total
                };
                let per_row: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let mut set_row = Vec::with_capacity(n);
                        let mut obj_row = Vec::with_capacity(n);
                        for j in 0..n {
                            let base = pair_expect(i, j, &|u, v| rows[u].0[v] + rows[u].1[v]);
                            let bt = pair_expect(i, j, &|u, v| rows[u].1[v]);
                            set_row.push(base + policy_bp[i] + policy_bp[j]);
                            obj_row.push(bt + policy_bp[i] + policy_bp[j]);
                        }
                        (set_row, obj_row)
                    })
                    .collect();
                let (set, obj): (Vec<_>, Vec<_>) = per_row.into_iter().unzip();
                (set, obj, Vec::new())
            }
            LearnedTarget::Feedback => {
                let est: Vec<f64> = xs.iter().map(|x| model.feedback_estimate_x(x)).collect();
                let bg: Vec<f64> = xs.iter().map(|x| model.feedback_bonus_x(x)).collect();
                let policy_est: Vec<f64> = laws.iter().map(|l| expect(l, &est)).collect();
                let policy_bg: Vec<f64> = laws.iter().map(|l| expect(l, &bg)).collect();
                let set = (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| {
                                policy_est[i] - policy_est[j]
                                    + policy_bg[i]
                                    + policy_bg[j]
                                    + policy_bp[i]
                                    + policy_bp[j]
                            })
                            .collect()
                    })
                    .collect();
                let single = (0..n).map(|i| policy_bg[i] + policy_bp[i]).collect();
                (set, Vec::new(), single)
            }
        };
        Ok(Self {
            target: model.target,
            catalog,
            laws,
            set_scores,
            pair_objective,
            single_objective,
        })
    }

    pub fn target(&self) -> LearnedTarget {
        self.target
    }

    pub fn pool_size(&self) -> usize {
        self.laws.len()
    }

    /// Distinct trajectories reachable by some pool policy.
    pub fn catalog(&self) -> &[Trajectory] {
        &self.catalog
    }

    /// Membership score of `pi_i` against opponent `pi_j`.
    pub fn set_score(&self, i: usize, j: usize) -> f64 {
        self.set_scores[i][j]
    }

    /// Pair exploration objective (preference target only).
    pub fn pair_objective(&self, i: usize, j: usize) -> f64 {
        self.pair_objective[i][j]
    }

    /// Single-policy exploration objective (feedback target only).
    pub fn single_objective(&self, i: usize) -> f64 {
        self.single_objective[i]
    }
}

// ── Near-optimal sets ───────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Minimising opponent (lowest index among ties).
    pub opponent: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySet {
    pub threshold: f64,
    pub membership: Vec<bool>,
    /// Worst-case opponent for every pool policy, member or not.
    pub certificates: Vec<Certificate>,
}

impl PolicySet {
    pub fn members(&self) -> Vec<usize> {
        self.membership
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.membership.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, i: usize) -> bool {
        self.membership.get(i).copied().unwrap_or(false)
    }
}

/// Builds `S_k` from a matrix of membership scores `score(i, j)`.
pub fn policy_set_from_scores(n: usize, threshold: f64, score: impl Fn(usize, usize) -> f64) -> PolicySet {
    let certificates: Vec<Certificate> = (0..n)
        .map(|i| {
            let mut best = Certificate {
                opponent: 0,
                value: score(i, 0),
            };
            for j in 1..n {
                let v = score(i, j);
                if v < best.value {
                    best = Certificate { opponent: j, value: v };
                }
            }
            best
        })
        .collect();
    let membership = certificates
        .iter()
        .map(|c| c.value >= threshold - MEMBERSHIP_TOL)
        .collect();
    PolicySet {
        threshold,
        membership,
        certificates,
    }
}

pub fn build_policy_set(eval: &PoolEvaluation) -> PolicySet {
    policy_set_from_scores(eval.pool_size(), eval.target.threshold(), |i, j| eval.set_score(i, j))
}

// ── Exploratory selection ───────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub policies: Vec<usize>,
    pub objective: f64,
    /// Set when the n-wise search fell back to the greedy construction.
    pub approximate: bool,
}

/// Exhaustive argmax over ordered pairs of `members`, first maximiser in
/// lexicographic order.
pub fn argmax_pair(members: &[usize], objective: impl Fn(usize, usize) -> f64) -> Result<Selection> {
    argmax_tuple(members, 2, DEFAULT_TUPLE_CAP, objective)
}

/// Argmax of `sum_{i<j} objective(p_i, p_j)` over `members^n`.
///
/// Exhaustive in lexicographic order when `|members|^n <= cap`, otherwise
/// the best pair is extended one policy at a time by largest marginal gain.
pub fn argmax_tuple(
    members: &[usize],
    n: usize,
    cap: usize,
    objective: impl Fn(usize, usize) -> f64,
) -> Result<Selection> {
    tuple_search(members, n, cap, &objective)
}

fn tuple_search(members: &[usize], n: usize, cap: usize, objective: &dyn Fn(usize, usize) -> f64) -> Result<Selection> {
    if members.is_empty() {
        return Err(PbrlError::EmptyPolicySet);
    }
    if n < 2 {
        return Err(PbrlError::InvalidArgument("tuples need n >= 2".into()));
    }
    let m = members.len();
    let total = (m as u128).checked_pow(n as u32);
    if total.is_some_and(|t| t <= cap as u128) {
        let total = total.unwrap_or(0) as usize;
        let mut digits = vec![0usize; n];
        let mut best: Option<(Vec<usize>, f64)> = None;
        for _ in 0..total {
            let tuple: Vec<usize> = digits.iter().map(|&d| members[d]).collect();
            let value = tuple_value(&tuple, objective);
            if best.as_ref().is_none_or(|(_, b)| value > *b) {
                best = Some((tuple, value));
            }
            // Increment, last position fastest.
            for pos in (0..n).rev() {
                digits[pos] += 1;
                if digits[pos] < m {
                    break;
                }
                digits[pos] = 0;
            }
        }
        let (policies, objective) = best.expect("at least one tuple");
        return Ok(Selection {
            policies,
            objective,
            approximate: false,
        });
    }
    let pair = tuple_search(members, 2, usize::MAX, objective)?;
    let mut tuple = pair.policies;
    while tuple.len() < n {
        let mut best: Option<(usize, f64)> = None;
        for &c in members {
            let gain: f64 = tuple.iter().map(|&p| objective(p, c)).sum();
            if best.is_none_or(|(_, b)| gain > b) {
                best = Some((c, gain));
            }
        }
        tuple.push(best.expect("nonempty members").0);
    }
    let objective = tuple_value(&tuple, objective);
    Ok(Selection {
        policies: tuple,
        objective,
        approximate: true,
    })
}

fn tuple_value(tuple: &[usize], objective: &dyn Fn(usize, usize) -> f64) -> f64 {
    let mut value = 0.0;
    for i in 0..tuple.len() {
        for j in (i + 1)..tuple.len() {
            value += objective(tuple[i], tuple[j]);
        }
    }
    value
}

pub fn select_exploratory_pair(set: &PolicySet, eval: &PoolEvaluation) -> Result<Selection> {
    argmax_pair(&set.members(), |i, j| eval.pair_objective(i, j))
}

pub fn select_exploratory_tuple(set: &PolicySet, n: usize, eval: &PoolEvaluation, cap: usize) -> Result<Selection> {
    argmax_tuple(&set.members(), n, cap, |i, j| eval.pair_objective(i, j))
}

pub fn select_exploratory_single(set: &PolicySet, eval: &PoolEvaluation) -> Result<Selection> {
    let members = set.members();
    let mut best: Option<(usize, f64)> = None;
    for &i in &members {
        let v = eval.single_objective(i);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    let (i, objective) = best.ok_or(PbrlError::EmptyPolicySet)?;
    Ok(Selection {
        policies: vec![i],
        objective,
        approximate: false,
    })
}
