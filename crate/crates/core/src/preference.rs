//! Hidden oracles: trajectory-pair preference functions and once-per-episode
//! feedback functions.
//!
//! Every preference variant is antisymmetric by construction. The model is
//! written as a margin `z(tau1, tau2)` that flips sign exactly under swapping,
//! and the probability is `link(|z|)` on one side and `1 - link(|z|)` on the
//! other, so `f(t1,t2) + f(t2,t1) == 1.0` holds bit-for-bit.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PbrlError, Result};
use crate::mdp::{
    dot, l2_norm, trajectory_distribution, EpisodicMdp, MarkovPolicy, PolicyPool, Trajectory,
    DEFAULT_TRAJECTORY_CAP,
};

const CONDORCET_TOL: f64 = 1e-9;
/// Upper limit on state-action sequences enumerated when computing exact
/// feature-norm bounds.
const NORM_ENUMERATION_CAP: usize = 200_000;

// ── Feature maps ────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub trajectory: Trajectory,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TableRepr {
    dim: usize,
    entries: Vec<TableEntry>,
}

/// Lookup table `tau -> x(tau)`; unlisted trajectories map to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct FeatureTable {
    dim: usize,
    entries: Vec<TableEntry>,
    index: HashMap<Trajectory, usize>,
}

impl TryFrom<TableRepr> for FeatureTable {
    type Error = PbrlError;

    fn try_from(r: TableRepr) -> Result<Self> {
        FeatureTable::new(r.dim, r.entries)
    }
}

impl From<FeatureTable> for TableRepr {
    fn from(t: FeatureTable) -> Self {
        TableRepr {
            dim: t.dim,
            entries: t.entries,
        }
    }
}

impl FeatureTable {
    pub fn new(dim: usize, entries: Vec<TableEntry>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.x.len() != dim || e.x.iter().any(|v| !v.is_finite()) {
                return Err(PbrlError::InvalidModel(format!(
                    "feature table entry {i} has wrong dimension or non-finite values"
                )));
            }
            if index.insert(e.trajectory.clone(), i).is_some() {
                return Err(PbrlError::InvalidModel(format!(
                    "feature table lists trajectory {:?} twice",
                    e.trajectory.steps
                )));
            }
        }
        Ok(Self { dim, entries, index })
    }
}

/// Trajectory embedding `x(tau) in R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrajectoryFeatureMap {
    /// Decomposable: `x(tau) = sum_h phi(s_h, a_h)` with `phi[s][a] in R^d`.
    StepSum { phi: Vec<Vec<Vec<f64>>> },
    /// Non-decomposable lookup.
    Table(FeatureTable),
}

impl TrajectoryFeatureMap {
    /// One-hot step features `phi(s,a) = e_{s*A + a}`.
    pub fn one_hot(num_states: usize, num_actions: usize) -> Self {
        let dim = num_states * num_actions;
        let phi = (0..num_states)
            .map(|s| {
                (0..num_actions)
                    .map(|a| {
                        let mut v = vec![0.0; dim];
                        v[s * num_actions + a] = 1.0;
                        v
                    })
                    .collect()
            })
            .collect();
        TrajectoryFeatureMap::StepSum { phi }
    }

    pub fn dim(&self) -> usize {
        match self {
            TrajectoryFeatureMap::StepSum { phi } => phi
                .first()
                .and_then(|r| r.first())
                .map(|v| v.len())
                .unwrap_or(0),
            TrajectoryFeatureMap::Table(t) => t.dim,
        }
    }

    pub fn features(&self, traj: &Trajectory) -> Vec<f64> {
        match self {
            TrajectoryFeatureMap::StepSum { phi } => {
                let mut x = vec![0.0; self.dim()];
                for &(s, a) in &traj.steps {
                    for (xi, p) in x.iter_mut().zip(&phi[s][a]) {
                        *xi += p;
                    }
                }
                x
            }
            TrajectoryFeatureMap::Table(t) => match t.index.get(traj) {
                Some(&i) => t.entries[i].x.clone(),
                None => vec![0.0; t.dim],
            },
        }
    }

    pub fn validate_for(&self, mdp: &EpisodicMdp) -> Result<()> {
        match self {
            TrajectoryFeatureMap::StepSum { phi } => {
                let d = self.dim();
                let ok = d > 0
                    && phi.len() == mdp.num_states()
                    && phi.iter().all(|r| {
                        r.len() == mdp.num_actions()
                            && r.iter().all(|v| v.len() == d && v.iter().all(|x| x.is_finite()))
                    });
                if !ok {
                    return Err(PbrlError::InvalidModel(format!(
                        "phi must have shape [{}][{}][d] with d > 0",
                        mdp.num_states(),
                        mdp.num_actions()
                    )));
                }
            }
            TrajectoryFeatureMap::Table(t) => {
                for e in &t.entries {
                    mdp.validate_trajectory(&e.trajectory)?;
                }
            }
        }
        Ok(())
    }

    /// `max_tau ||x(tau)||_2` over all `H`-step state-action sequences from
    /// the initial state. Exact by enumeration when `(S*A)^(H-1) * A` is small
    /// enough, otherwise the triangle-inequality bound `H * max ||phi||`.
    pub fn norm_bound(&self, mdp: &EpisodicMdp) -> f64 {
        match self {
            TrajectoryFeatureMap::Table(t) => t
                .entries
                .iter()
                .map(|e| l2_norm(&e.x))
                .fold(0.0, f64::max),
            TrajectoryFeatureMap::StepSum { phi } => {
                let (ns, na, h) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
                let count = (ns as f64 * na as f64).powi(h as i32 - 1) * na as f64;
                if count <= NORM_ENUMERATION_CAP as f64 {
                    let mut best = 0.0f64;
                    let mut acc = vec![0.0; self.dim()];
                    max_norm_dfs(phi, ns, na, h, 0, mdp.initial_state(), &mut acc, &mut best);
                    best
                } else {
                    let step_max = phi
                        .iter()
                        .flatten()
                        .map(|v| l2_norm(v))
                        .fold(0.0, f64::max);
                    h as f64 * step_max
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn max_norm_dfs(
    phi: &[Vec<Vec<f64>>],
    ns: usize,
    na: usize,
    horizon: usize,
    h: usize,
    state: usize,
    acc: &mut Vec<f64>,
    best: &mut f64,
) {
    for a in 0..na {
        for (x, p) in acc.iter_mut().zip(&phi[state][a]) {
            *x += p;
        }
        if h + 1 == horizon {
            *best = best.max(l2_norm(acc));
        } else {
            for next in 0..ns {
                max_norm_dfs(phi, ns, na, horizon, h + 1, next, acc, best);
            }
        }
        for (x, p) in acc.iter_mut().zip(&phi[state][a]) {
            *x -= p;
        }
    }
}

/// Sum of a per-step table `r[s][a]` along a trajectory.
pub fn trajectory_utility(r: &[Vec<f64>], traj: &Trajectory) -> f64 {
    traj.steps.iter().map(|&(s, a)| r[s][a]).sum()
}

fn check_reward_table(r: &[Vec<f64>], mdp: &EpisodicMdp) -> Result<()> {
    let max = 1.0 / mdp.horizon() as f64;
    let ok = r.len() == mdp.num_states()
        && r.iter().all(|row| {
            row.len() == mdp.num_actions() && row.iter().all(|v| (0.0..=max + 1e-12).contains(v))
        });
    if ok {
        Ok(())
    } else {
        Err(PbrlError::InvalidModel(format!(
            "reward table must be [{}][{}] with entries in [0, 1/H]",
            mdp.num_states(),
            mdp.num_actions()
        )))
    }
}

/// Turns an antisymmetric margin into a probability whose swap is exactly
/// `1 - p`. `link` maps a nonnegative margin to `[1/2, 1]`.
pub(crate) fn antisymmetric(margin: f64, link: impl Fn(f64) -> f64) -> f64 {
    if margin >= 0.0 {
        link(margin).min(1.0)
    } else {
        1.0 - link(-margin).min(1.0)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

// ── Preference models ───────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PreferenceKind {
    /// `1/2 + (x(t1) - x(t2))^T theta`.
    Linear { theta: Vec<f64> },
    /// `sigmoid((x(t1) - x(t2))^T theta)`.
    Logistic { theta: Vec<f64> },
    /// `(r(t1) - r(t2) + 1) / 2` with per-step rewards in `[0, 1/H]`.
    #[serde(rename = "utility")]
    UtilityBased { r: Vec<Vec<f64>> },
}

/// Hidden preference oracle `T(t1, t2) = Pr(t1 > t2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceModel {
    #[serde(rename = "pref")]
    pub kind: PreferenceKind,
    /// Trajectory features. Utility models default to one-hot step features
    /// when this is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<TrajectoryFeatureMap>,
}

impl PreferenceModel {
    pub fn linear(theta: Vec<f64>, features: TrajectoryFeatureMap) -> Self {
        Self {
            kind: PreferenceKind::Linear { theta },
            features: Some(features),
        }
    }

    pub fn logistic(theta: Vec<f64>, features: TrajectoryFeatureMap) -> Self {
        Self {
            kind: PreferenceKind::Logistic { theta },
            features: Some(features),
        }
    }

    pub fn utility(r: Vec<Vec<f64>>) -> Self {
        Self {
            kind: PreferenceKind::UtilityBased { r },
            features: None,
        }
    }

    /// Checks shapes and the `[0,1]` range against an MDP.
    pub fn validate_for(&self, mdp: &EpisodicMdp) -> Result<()> {
        let features = self.learner_features(mdp);
        features.validate_for(mdp)?;
        match &self.kind {
            PreferenceKind::Linear { theta } | PreferenceKind::Logistic { theta } => {
                if self.features.is_none() {
                    return Err(PbrlError::InvalidModel(
                        "linear and logistic preferences need a feature map".into(),
                    ));
                }
                if theta.len() != features.dim() {
                    return Err(PbrlError::InvalidModel(format!(
                        "theta has length {}, features have dimension {}",
                        theta.len(),
                        features.dim()
                    )));
                }
                if matches!(self.kind, PreferenceKind::Linear { .. }) {
                    let diff_bound = 2.0 * features.norm_bound(mdp);
                    if 0.5 + diff_bound * l2_norm(theta) > 1.0 + 1e-12 {
                        return Err(PbrlError::InvalidModel(format!(
                            "linear preference leaves [0,1]: L * ||theta|| = {} > 1/2",
                            diff_bound * l2_norm(theta)
                        )));
                    }
                }
            }
            PreferenceKind::UtilityBased { r } => check_reward_table(r, mdp)?,
        }
        Ok(())
    }

    /// Feature map the least-squares learner regresses on.
    pub fn learner_features(&self, mdp: &EpisodicMdp) -> TrajectoryFeatureMap {
        match &self.features {
            Some(f) => f.clone(),
            None => TrajectoryFeatureMap::one_hot(mdp.num_states(), mdp.num_actions()),
        }
    }

    /// True parameter in the learner's linear class `1/2 + (x1 - x2)^T theta`,
    /// or `None` when the model is not linear in its features (logistic).
    pub fn linear_truth(&self) -> Option<Vec<f64>> {
        match &self.kind {
            PreferenceKind::Linear { theta } => Some(theta.clone()),
            PreferenceKind::Logistic { .. } => None,
            PreferenceKind::UtilityBased { r } => {
                if self.features.is_some() {
                    return None;
                }
                Some(r.iter().flatten().map(|v| v / 2.0).collect())
            }
        }
    }

    /// Antisymmetric margin; `pref_prob` is a monotone link of it.
    fn margin(&self, t1: &Trajectory, t2: &Trajectory) -> f64 {
        match &self.kind {
            PreferenceKind::Linear { theta } | PreferenceKind::Logistic { theta } => {
                let f = self.features.as_ref().expect("validated feature map");
                dot(&f.features(t1), theta) - dot(&f.features(t2), theta)
            }
            PreferenceKind::UtilityBased { r } => {
                (trajectory_utility(r, t1) - trajectory_utility(r, t2)) / 2.0
            }
        }
    }

    pub fn pref_prob(&self, t1: &Trajectory, t2: &Trajectory) -> f64 {
        let z = self.margin(t1, t2);
        match self.kind {
            PreferenceKind::Logistic { .. } => antisymmetric(z, sigmoid),
            _ => antisymmetric(z, |m| 0.5 + m),
        }
    }

    pub fn sample_preference<R: Rng + ?Sized>(
        &self,
        t1: &Trajectory,
        t2: &Trajectory,
        rng: &mut R,
    ) -> u8 {
        bernoulli(self.pref_prob(t1, t2), rng)
    }
}

pub(crate) fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u8 {
    u8::from(rng.gen::<f64>() < p)
}

/// Exact `T(pi1, pi2) = E[T(t1, t2)]` over the product of trajectory laws.
pub fn policy_pref(
    model: &PreferenceModel,
    mdp: &EpisodicMdp,
    pi1: &MarkovPolicy,
    pi2: &MarkovPolicy,
    cap: usize,
) -> Result<f64> {
    let d1 = marginal_or_mc(mdp, pi1, cap)?;
    let d2 = marginal_or_mc(mdp, pi2, cap)?;
    Ok(pair_expectation(&d1, &d2, |a, b| model.pref_prob(a, b)))
}

fn marginal_or_mc(
    mdp: &EpisodicMdp,
    pi: &MarkovPolicy,
    cap: usize,
) -> Result<Vec<(Trajectory, f64)>> {
    match trajectory_distribution(mdp, pi, cap) {
        Ok(d) => Ok(d.marginal()),
        Err(PbrlError::EnumerationCapExceeded { cap }) => Err(PbrlError::MonteCarloRequired { cap }),
        Err(e) => Err(e),
    }
}

fn pair_expectation(
    d1: &[(Trajectory, f64)],
    d2: &[(Trajectory, f64)],
    f: impl Fn(&Trajectory, &Trajectory) -> f64,
) -> f64 {
    d1.iter()
        .map(|(t1, p1)| p1 * d2.iter().map(|(t2, p2)| p2 * f(t1, t2)).sum::<f64>())
        .sum()
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            std_error: 0.0,
            samples: 0,
        }
    }

    pub fn from_samples(values: impl Iterator<Item = f64>) -> Self {
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for v in values {
            n += 1;
            let delta = v - mean;
            mean += delta / n as f64;
            m2 += delta * (v - mean);
        }
        let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        Self {
            mean,
            std_error: (var / n.max(1) as f64).sqrt(),
            samples: n,
        }
    }
}

/// Paired-sample estimate of `T(pi1, pi2)` for instances too large to enumerate.
pub fn policy_pref_monte_carlo<R: Rng + ?Sized>(
    model: &PreferenceModel,
    mdp: &EpisodicMdp,
    pi1: &MarkovPolicy,
    pi2: &MarkovPolicy,
    samples: usize,
    rng: &mut R,
) -> Estimate {
    Estimate::from_samples((0..samples).map(|_| {
        let t1 = crate::mdp::sample_trajectory(mdp, pi1, rng);
        let t2 = crate::mdp::sample_trajectory(mdp, pi2, rng);
        model.pref_prob(&t1, &t2)
    }))
}

/// `M[i][j] = T(pool_i, pool_j)` by exact enumeration.
pub fn preference_matrix(
    model: &PreferenceModel,
    mdp: &EpisodicMdp,
    pool: &PolicyPool,
    cap: usize,
) -> Result<Vec<Vec<f64>>> {
    let laws = pool
        .policies
        .iter()
        .map(|pi| marginal_or_mc(mdp, pi, cap))
        .collect::<Result<Vec<_>>>()?;
    Ok(laws
        .iter()
        .map(|d1| {
            laws.iter()
                .map(|d2| pair_expectation(d1, d2, |a, b| model.pref_prob(a, b)))
                .collect()
        })
        .collect())
}

/// Lowest-index pool member preferred (up to 1e-9) to every pool member.
pub fn condorcet_from_matrix(matrix: &[Vec<f64>]) -> Result<usize> {
    let mut best_margin = f64::NEG_INFINITY;
    for (i, row) in matrix.iter().enumerate() {
        let worst = row.iter().copied().fold(f64::INFINITY, f64::min);
        if worst >= 0.5 - CONDORCET_TOL {
            return Ok(i);
        }
        best_margin = best_margin.max(worst);
    }
    Err(PbrlError::NoCondorcetWinner { best_margin })
}

pub fn find_condorcet_policy(
    model: &PreferenceModel,
    mdp: &EpisodicMdp,
    pool: &PolicyPool,
) -> Result<usize> {
    if pool.is_empty() {
        return Err(PbrlError::InvalidArgument("empty policy pool".into()));
    }
    condorcet_from_matrix(&preference_matrix(model, mdp, pool, DEFAULT_TRAJECTORY_CAP)?)
}

// ── Once-per-episode feedback ───────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeedbackKind {
    /// `clip(x(tau)^T theta, 0, 1)`.
    LinearClipped { theta: Vec<f64> },
    /// `sum_h r(s_h, a_h)` with per-step rewards in `[0, 1/H]`.
    UtilitySum { r: Vec<Vec<f64>> },
}

/// Hidden feedback function `g*(tau) in [0,1]`; the agent observes
/// `y ~ Bernoulli(g*(tau))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackModel {
    #[serde(rename = "feedback")]
    pub kind: FeedbackKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<TrajectoryFeatureMap>,
}

impl FeedbackModel {
    pub fn linear_clipped(theta: Vec<f64>, features: TrajectoryFeatureMap) -> Self {
        Self {
            kind: FeedbackKind::LinearClipped { theta },
            features: Some(features),
        }
    }

    pub fn utility_sum(r: Vec<Vec<f64>>) -> Self {
        Self {
            kind: FeedbackKind::UtilitySum { r },
            features: None,
        }
    }

    pub fn validate_for(&self, mdp: &EpisodicMdp) -> Result<()> {
        let features = self.learner_features(mdp);
        features.validate_for(mdp)?;
        match &self.kind {
            FeedbackKind::LinearClipped { theta } => {
                if self.features.is_none() || theta.len() != features.dim() {
                    return Err(PbrlError::InvalidModel(
                        "linear feedback needs a feature map matching theta".into(),
                    ));
                }
            }
            FeedbackKind::UtilitySum { r } => check_reward_table(r, mdp)?,
        }
        Ok(())
    }

    pub fn learner_features(&self, mdp: &EpisodicMdp) -> TrajectoryFeatureMap {
        match &self.features {
            Some(f) => f.clone(),
            None => TrajectoryFeatureMap::one_hot(mdp.num_states(), mdp.num_actions()),
        }
    }

    /// True parameter in the learner's class `g(tau) = x(tau)^T theta`.
    pub fn linear_truth(&self) -> Option<Vec<f64>> {
        match &self.kind {
            FeedbackKind::LinearClipped { theta } => Some(theta.clone()),
            FeedbackKind::UtilitySum { r } => {
                if self.features.is_some() {
                    None
                } else {
                    Some(r.iter().flatten().copied().collect())
                }
            }
        }
    }

    pub fn feedback_value(&self, traj: &Trajectory) -> f64 {
        match &self.kind {
            FeedbackKind::LinearClipped { theta } => {
                let f = self.features.as_ref().expect("validated feature map");
                dot(&f.features(traj), theta).clamp(0.0, 1.0)
            }
            FeedbackKind::UtilitySum { r } => trajectory_utility(r, traj).clamp(0.0, 1.0),
        }
    }

    pub fn sample_feedback<R: Rng + ?Sized>(&self, traj: &Trajectory, rng: &mut R) -> u8 {
        bernoulli(self.feedback_value(traj), rng)
    }
}

/// `V^pi(s1) = E[g*(tau)]`, exactly.
pub fn policy_value(
    model: &FeedbackModel,
    mdp: &EpisodicMdp,
    pi: &MarkovPolicy,
    cap: usize,
) -> Result<f64> {
    Ok(marginal_or_mc(mdp, pi, cap)?
        .iter()
        .map(|(t, p)| p * model.feedback_value(t))
        .sum())
}
