//! Episodic MDPs, trajectories and Markov policies.
//!
//! An [`EpisodicMdp`] has a fixed initial state and a time-homogeneous kernel
//! that is either a dense tabular tensor `P[s][a][s']` or a linear mixture
//! `P(s'|s,a) = psi(s,a,s')^T theta`. Both are materialised into a dense
//! [`TransitionTable`] at construction; planners build the same table from an
//! estimated mixture parameter.
//!
//! Trajectory laws are computed exactly by depth-first enumeration, capped at
//! [`DEFAULT_TRAJECTORY_CAP`] trajectories.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PbrlError, Result};

pub const DEFAULT_TRAJECTORY_CAP: usize = 200_000;
pub const DEFAULT_POOL_CAP: usize = 20_000;

const STOCHASTIC_TOL: f64 = 1e-9;
/// Largest state count for which the mixture normalisation is checked on
/// every vertex of `{0,1}^S`.
const EXACT_VERTEX_STATES: usize = 12;

// ── Transition tables ───────────────────────────────────────────────────

/// Dense row-stochastic tensor `P[s][a][s']`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionTable {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TransitionTable {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions * num_states {
            return Err(PbrlError::InvalidModel(format!(
                "transition table has {} entries, expected {}",
                probs.len(),
                num_states * num_actions * num_states
            )));
        }
        let table = Self {
            num_states,
            num_actions,
            probs,
        };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.row(s, a);
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(PbrlError::InvalidModel(format!(
                        "negative or non-finite transition probability at (s={s}, a={a})"
                    )));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(PbrlError::InvalidModel(format!(
                        "transition row (s={s}, a={a}) sums to {total}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.probs[start..start + self.num_states]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a)[next]
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_categorical(self.row(s, a), rng)
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

// ── Kernels and the MDP ─────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Kernel {
    #[serde(rename = "tabular")]
    Tabular {
        #[serde(rename = "P")]
        p: Vec<Vec<Vec<f64>>>,
    },
    #[serde(rename = "linear_mixture")]
    LinearMixture {
        /// `psi[s][a][s']` is a feature vector in `R^d`.
        psi: Vec<Vec<Vec<Vec<f64>>>>,
        theta: Vec<f64>,
        #[serde(rename = "B")]
        bound: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct MdpRepr {
    #[serde(rename = "S")]
    num_states: usize,
    #[serde(rename = "A")]
    num_actions: usize,
    #[serde(rename = "H")]
    horizon: usize,
    s1: usize,
    kernel: Kernel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpRepr", into = "MdpRepr")]
pub struct EpisodicMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_state: usize,
    kernel: Kernel,
    table: TransitionTable,
}

impl TryFrom<MdpRepr> for EpisodicMdp {
    type Error = PbrlError;

    fn try_from(r: MdpRepr) -> Result<Self> {
        EpisodicMdp::new(r.num_states, r.num_actions, r.horizon, r.s1, r.kernel)
    }
}

impl From<EpisodicMdp> for MdpRepr {
    fn from(m: EpisodicMdp) -> Self {
        MdpRepr {
            num_states: m.num_states,
            num_actions: m.num_actions,
            horizon: m.horizon,
            s1: m.initial_state,
            kernel: m.kernel,
        }
    }
}

impl EpisodicMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_state: usize,
        kernel: Kernel,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(PbrlError::InvalidModel(
                "S, A and H must all be positive".into(),
            ));
        }
        if initial_state >= num_states {
            return Err(PbrlError::InvalidModel(format!(
                "initial state {initial_state} out of range for S={num_states}"
            )));
        }
        let probs = match &kernel {
            Kernel::Tabular { p } => {
                check_shape3(p, num_states, num_actions, num_states, "P")?;
                p.iter().flatten().flatten().copied().collect()
            }
            Kernel::LinearMixture { psi, theta, bound } => {
                let features = TransitionFeatures::from_nested(psi, num_states, num_actions)?;
                if theta.len() != features.dim() {
                    return Err(PbrlError::InvalidModel(format!(
                        "theta has length {}, features have dimension {}",
                        theta.len(),
                        features.dim()
                    )));
                }
                let norm = l2_norm(theta);
                if norm > bound + 1e-9 {
                    return Err(PbrlError::InvalidModel(format!(
                        "mixture parameter norm {norm} exceeds bound B={bound}"
                    )));
                }
                features.check_normalization()?;
                let mut probs = features.raw_kernel(theta);
                // Round-off from the inner products may leave -1e-17 style entries.
                for p in probs.iter_mut() {
                    if *p < 0.0 && *p > -1e-12 {
                        *p = 0.0;
                    }
                }
                probs
            }
        };
        let table = TransitionTable::new(num_states, num_actions, probs)?;
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            initial_state,
            kernel,
            table,
        })
    }

    /// Convenience constructor for a tabular MDP from a flat `S*A*S` tensor.
    pub fn tabular(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_state: usize,
        flat: &[f64],
    ) -> Result<Self> {
        if flat.len() != num_states * num_actions * num_states {
            return Err(PbrlError::InvalidModel("tabular kernel has wrong size".into()));
        }
        let p = (0..num_states)
            .map(|s| {
                (0..num_actions)
                    .map(|a| {
                        let start = (s * num_actions + a) * num_states;
                        flat[start..start + num_states].to_vec()
                    })
                    .collect()
            })
            .collect();
        Self::new(num_states, num_actions, horizon, initial_state, Kernel::Tabular { p })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn table(&self) -> &TransitionTable {
        &self.table
    }

    /// Features and true parameter for value-targeted regression.
    ///
    /// Tabular kernels are embedded as a linear mixture with one-hot features
    /// `e_(s,a,s') / sqrt(S)` so that `||sum_s' psi V|| <= 1` still holds.
    pub fn transition_features(&self) -> (TransitionFeatures, Vec<f64>, f64) {
        match &self.kernel {
            Kernel::LinearMixture { psi, theta, bound } => (
                TransitionFeatures::from_nested(psi, self.num_states, self.num_actions)
                    .expect("validated at construction"),
                theta.clone(),
                *bound,
            ),
            Kernel::Tabular { .. } => {
                let s_count = self.num_states;
                let dim = s_count * self.num_actions * s_count;
                let scale = 1.0 / (s_count as f64).sqrt();
                let mut psi = vec![0.0; dim * dim];
                for idx in 0..dim {
                    psi[idx * dim + idx] = scale;
                }
                let theta: Vec<f64> = self.table.probs.iter().map(|p| p / scale).collect();
                let bound = l2_norm(&theta);
                (
                    TransitionFeatures {
                        num_states: s_count,
                        num_actions: self.num_actions,
                        dim,
                        psi,
                    },
                    theta,
                    bound,
                )
            }
        }
    }

    pub fn validate_trajectory(&self, traj: &Trajectory) -> Result<()> {
        if traj.len() != self.horizon {
            return Err(PbrlError::InvalidArgument(format!(
                "trajectory has {} steps, horizon is {}",
                traj.len(),
                self.horizon
            )));
        }
        if traj.steps.first().map(|s| s.0) != Some(self.initial_state) {
            return Err(PbrlError::InvalidArgument(
                "trajectory does not start at the initial state".into(),
            ));
        }
        if traj
            .steps
            .iter()
            .any(|&(s, a)| s >= self.num_states || a >= self.num_actions)
        {
            return Err(PbrlError::InvalidArgument("trajectory index out of range".into()));
        }
        Ok(())
    }
}

fn check_shape3(
    t: &[Vec<Vec<f64>>],
    d0: usize,
    d1: usize,
    d2: usize,
    name: &str,
) -> Result<()> {
    let ok = t.len() == d0
        && t.iter()
            .all(|m| m.len() == d1 && m.iter().all(|r| r.len() == d2));
    if ok {
        Ok(())
    } else {
        Err(PbrlError::InvalidModel(format!(
            "{name} must have shape [{d0}][{d1}][{d2}]"
        )))
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ── Mixture features ────────────────────────────────────────────────────

/// Feature tensor `psi(s,a,s') in R^d` of a linear mixture transition model.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionFeatures {
    num_states: usize,
    num_actions: usize,
    dim: usize,
    psi: Vec<f64>,
}

impl TransitionFeatures {
    pub fn new(num_states: usize, num_actions: usize, dim: usize, psi: Vec<f64>) -> Result<Self> {
        if dim == 0 || psi.len() != num_states * num_actions * num_states * dim {
            return Err(PbrlError::InvalidModel("psi has wrong size".into()));
        }
        if psi.iter().any(|x| !x.is_finite()) {
            return Err(PbrlError::InvalidModel("psi has non-finite entries".into()));
        }
        Ok(Self {
            num_states,
            num_actions,
            dim,
            psi,
        })
    }

    fn from_nested(psi: &[Vec<Vec<Vec<f64>>>], num_states: usize, num_actions: usize) -> Result<Self> {
        let dim = psi
            .first()
            .and_then(|m| m.first())
            .and_then(|r| r.first())
            .map(|v| v.len())
            .unwrap_or(0);
        let shape_ok = psi.len() == num_states
            && psi.iter().all(|m| {
                m.len() == num_actions
                    && m.iter()
                        .all(|r| r.len() == num_states && r.iter().all(|v| v.len() == dim))
            });
        if !shape_ok {
            return Err(PbrlError::InvalidModel(format!(
                "psi must have shape [{num_states}][{num_actions}][{num_states}][d]"
            )));
        }
        let flat = psi.iter().flatten().flatten().flatten().copied().collect();
        Self::new(num_states, num_actions, dim, flat)
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<Vec<f64>>>> {
        (0..self.num_states)
            .map(|s| {
                (0..self.num_actions)
                    .map(|a| {
                        (0..self.num_states)
                            .map(|n| self.psi_at(s, a, n).to_vec())
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn psi_at(&self, s: usize, a: usize, next: usize) -> &[f64] {
        let start = ((s * self.num_actions + a) * self.num_states + next) * self.dim;
        &self.psi[start..start + self.dim]
    }

    /// `sum_s' psi(s,a,s') V(s')`.
    pub fn value_feature(&self, s: usize, a: usize, value: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (next, v) in value.iter().enumerate() {
            if *v != 0.0 {
                for (o, p) in out.iter_mut().zip(self.psi_at(s, a, next)) {
                    *o += v * p;
                }
            }
        }
        out
    }

    fn raw_kernel(&self, theta: &[f64]) -> Vec<f64> {
        let mut probs = Vec::with_capacity(self.num_states * self.num_actions * self.num_states);
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                for n in 0..self.num_states {
                    probs.push(dot(self.psi_at(s, a, n), theta));
                }
            }
        }
        probs
    }

    /// Kernel induced by `theta`, projected onto the simplex row by row
    /// (negative entries zeroed, rows renormalised, empty rows uniform).
    /// Returns the table and the total mass moved by the projection.
    pub fn projected_kernel(&self, theta: &[f64]) -> (TransitionTable, f64) {
        let mut probs = self.raw_kernel(theta);
        let n = self.num_states;
        let mut moved = 0.0;
        for row in probs.chunks_mut(n) {
            let before: Vec<f64> = row.to_vec();
            for p in row.iter_mut() {
                if !p.is_finite() || *p < 0.0 {
                    *p = 0.0;
                }
            }
            let total: f64 = row.iter().sum();
            if total > 1e-12 {
                row.iter_mut().for_each(|p| *p /= total);
            } else {
                row.iter_mut().for_each(|p| *p = 1.0 / n as f64);
            }
            moved += row
                .iter()
                .zip(&before)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        }
        let table = TransitionTable {
            num_states: self.num_states,
            num_actions: self.num_actions,
            probs,
        };
        (table, moved)
    }

    /// Checks `||sum_s' psi(s,a,s') V(s')||_2 <= 1` over value vertices.
    pub fn check_normalization(&self) -> Result<()> {
        let check = |s: usize, a: usize, v: &[f64]| -> Result<()> {
            let norm = l2_norm(&self.value_feature(s, a, v));
            if norm > 1.0 + 1e-9 {
                Err(PbrlError::InvalidModel(format!(
                    "mixture features violate ||sum psi V|| <= 1 at (s={s}, a={a}): {norm}"
                )))
            } else {
                Ok(())
            }
        };
        let n = self.num_states;
        for s in 0..n {
            for a in 0..self.num_actions {
                if n <= EXACT_VERTEX_STATES {
                    for mask in 0u32..(1u32 << n) {
                        check(s, a, &vertex(mask, n))?;
                    }
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(0);
                    for _ in 0..1000 {
                        let v: Vec<f64> = (0..n)
                            .map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 })
                            .collect();
                        check(s, a, &v)?;
                    }
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn vertex(mask: u32, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if mask & (1 << i) != 0 { 1.0 } else { 0.0 })
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ── Trajectories ────────────────────────────────────────────────────────

/// An `H`-step sequence of `(state, action)` pairs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize)>,
}

impl Trajectory {
    pub fn new(steps: Vec<(usize, usize)>) -> Self {
        Self { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// A trajectory together with the state reached after its last action.
/// The final state is needed for the value-targeted regression row of step `H`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rollout {
    pub trajectory: Trajectory,
    pub final_state: usize,
}

impl Rollout {
    /// `(s_h, a_h, s_{h+1})` for every step.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let steps = &self.trajectory.steps;
        steps.iter().enumerate().map(move |(h, &(s, a))| {
            let next = steps.get(h + 1).map(|x| x.0).unwrap_or(self.final_state);
            (s, a, next)
        })
    }
}

// ── Policies ────────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MarkovPolicy {
    /// `actions[h * S + s]`.
    Deterministic {
        num_states: usize,
        actions: Vec<usize>,
    },
    /// `probs[(h * S + s) * A + a]`.
    Stochastic {
        num_states: usize,
        num_actions: usize,
        probs: Vec<f64>,
    },
}

impl MarkovPolicy {
    pub fn deterministic(num_states: usize, actions: Vec<usize>) -> Self {
        MarkovPolicy::Deterministic { num_states, actions }
    }

    pub fn stochastic(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || !probs.len().is_multiple_of(num_states * num_actions) {
            return Err(PbrlError::InvalidArgument("policy table has wrong size".into()));
        }
        for row in probs.chunks(num_actions) {
            if row.iter().any(|p| *p < 0.0 || !p.is_finite())
                || (row.iter().sum::<f64>() - 1.0).abs() > STOCHASTIC_TOL
            {
                return Err(PbrlError::InvalidArgument(
                    "policy rows must be probability vectors".into(),
                ));
            }
        }
        Ok(MarkovPolicy::Stochastic {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn action_prob(&self, h: usize, s: usize, a: usize) -> f64 {
        match self {
            MarkovPolicy::Deterministic { num_states, actions } => {
                if actions[h * num_states + s] == a {
                    1.0
                } else {
                    0.0
                }
            }
            MarkovPolicy::Stochastic {
                num_states,
                num_actions,
                probs,
            } => probs[(h * num_states + s) * num_actions + a],
        }
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, h: usize, s: usize, rng: &mut R) -> usize {
        match self {
            MarkovPolicy::Deterministic { num_states, actions } => actions[h * num_states + s],
            MarkovPolicy::Stochastic {
                num_states,
                num_actions,
                probs,
            } => {
                let start = (h * num_states + s) * num_actions;
                sample_categorical(&probs[start..start + num_actions], rng)
            }
        }
    }

    pub(crate) fn check_compatible(&self, mdp: &EpisodicMdp) -> Result<()> {
        let ok = match self {
            MarkovPolicy::Deterministic { num_states, actions } => {
                *num_states == mdp.num_states
                    && actions.len() == mdp.horizon * mdp.num_states
                    && actions.iter().all(|a| *a < mdp.num_actions)
            }
            MarkovPolicy::Stochastic {
                num_states,
                num_actions,
                probs,
            } => {
                *num_states == mdp.num_states
                    && *num_actions == mdp.num_actions
                    && probs.len() == mdp.horizon * mdp.num_states * mdp.num_actions
            }
        };
        if ok {
            Ok(())
        } else {
            Err(PbrlError::InvalidArgument(
                "policy shape does not match the MDP".into(),
            ))
        }
    }
}

// ── Trajectory laws ─────────────────────────────────────────────────────

/// Exact law of a full episode under `(P, pi)`: every rollout (the `H`
/// state-action pairs plus the state reached after the last action) with
/// positive probability, in depth-first order. Rollouts sharing the same
/// `H`-step trajectory are adjacent; [`TrajectoryDistribution::marginal`]
/// merges them.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDistribution {
    pub entries: Vec<(Rollout, f64)>,
}

impl TrajectoryDistribution {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Law of the `H`-step trajectory alone.
    pub fn marginal(&self) -> Vec<(Trajectory, f64)> {
        let mut out: Vec<(Trajectory, f64)> = Vec::new();
        for (rollout, p) in &self.entries {
            match out.last_mut() {
                Some((t, acc)) if *t == rollout.trajectory => *acc += p,
                _ => out.push((rollout.trajectory.clone(), *p)),
            }
        }
        out
    }

    pub fn prob_of(&self, traj: &Trajectory) -> f64 {
        self.entries
            .iter()
            .filter(|(r, _)| r.trajectory == *traj)
            .map(|(_, p)| *p)
            .sum()
    }
}

pub fn trajectory_distribution(
    mdp: &EpisodicMdp,
    policy: &MarkovPolicy,
    cap: usize,
) -> Result<TrajectoryDistribution> {
    policy.check_compatible(mdp)?;
    distribution_under(
        mdp.table(),
        mdp.horizon(),
        mdp.initial_state(),
        policy,
        cap,
    )
}

/// Episode law under an arbitrary transition table (estimated models use
/// this with their projected kernel).
pub fn distribution_under(
    table: &TransitionTable,
    horizon: usize,
    initial_state: usize,
    policy: &MarkovPolicy,
    cap: usize,
) -> Result<TrajectoryDistribution> {
    let mut entries = Vec::new();
    let mut prefix = Vec::with_capacity(horizon);
    expand(
        table,
        horizon,
        policy,
        initial_state,
        1.0,
        &mut prefix,
        &mut entries,
        cap,
    )?;
    Ok(TrajectoryDistribution { entries })
}

#[allow(clippy::too_many_arguments)]
fn expand(
    table: &TransitionTable,
    horizon: usize,
    policy: &MarkovPolicy,
    state: usize,
    prob: f64,
    prefix: &mut Vec<(usize, usize)>,
    out: &mut Vec<(Rollout, f64)>,
    cap: usize,
) -> Result<()> {
    let h = prefix.len();
    for a in 0..table.num_actions() {
        let pa = policy.action_prob(h, state, a);
        if pa <= 0.0 {
            continue;
        }
        prefix.push((state, a));
        for (next, pn) in table.row(state, a).iter().enumerate() {
            if *pn <= 0.0 {
                continue;
            }
            if h + 1 == horizon {
                if out.len() >= cap {
                    return Err(PbrlError::EnumerationCapExceeded { cap });
                }
                out.push((
                    Rollout {
                        trajectory: Trajectory::new(prefix.clone()),
                        final_state: next,
                    },
                    prob * pa * pn,
                ));
            } else {
                expand(table, horizon, policy, next, prob * pa * pn, prefix, out, cap)?;
            }
        }
        prefix.pop();
    }
    Ok(())
}

pub fn sample_rollout<R: Rng + ?Sized>(
    mdp: &EpisodicMdp,
    policy: &MarkovPolicy,
    rng: &mut R,
) -> Rollout {
    sample_rollout_under(&mdp.table, mdp.horizon, mdp.initial_state, policy, rng)
}

/// Samples one episode under an arbitrary transition table.
pub fn sample_rollout_under<R: Rng + ?Sized>(
    table: &TransitionTable,
    horizon: usize,
    initial_state: usize,
    policy: &MarkovPolicy,
    rng: &mut R,
) -> Rollout {
    let mut steps = Vec::with_capacity(horizon);
    let mut s = initial_state;
    for h in 0..horizon {
        let a = policy.sample_action(h, s, rng);
        steps.push((s, a));
        s = table.sample_next(s, a, rng);
    }
    Rollout {
        trajectory: Trajectory::new(steps),
        final_state: s,
    }
}

pub fn sample_trajectory<R: Rng + ?Sized>(
    mdp: &EpisodicMdp,
    policy: &MarkovPolicy,
    rng: &mut R,
) -> Trajectory {
    sample_rollout(mdp, policy, rng).trajectory
}

/// Step-indexed state-action occupancy `d_h(s,a)` by forward recursion,
/// laid out as `[h][s * A + a]`.
pub fn occupancy(mdp: &EpisodicMdp, policy: &MarkovPolicy) -> Vec<Vec<f64>> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let mut state_dist = vec![0.0; ns];
    state_dist[mdp.initial_state] = 1.0;
    let mut out = Vec::with_capacity(mdp.horizon);
    for h in 0..mdp.horizon {
        let mut occ = vec![0.0; ns * na];
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            if state_dist[s] == 0.0 {
                continue;
            }
            for a in 0..na {
                let w = state_dist[s] * policy.action_prob(h, s, a);
                occ[s * na + a] = w;
                if w > 0.0 {
                    for (n, p) in mdp.table.row(s, a).iter().enumerate() {
                        next[n] += w * p;
                    }
                }
            }
        }
        out.push(occ);
        state_dist = next;
    }
    out
}

// ── Policy pools ────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    Exhaustive,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolDescriptor {
    pub mode: PoolMode,
    pub cap: usize,
    pub seed: u64,
}

/// Finite stand-in for the policy class: deterministic Markov policies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyPool {
    pub policies: Vec<MarkovPolicy>,
    pub descriptor: PoolDescriptor,
}

impl PolicyPool {
    pub fn from_policies(policies: Vec<MarkovPolicy>) -> Result<Self> {
        if policies.is_empty() {
            return Err(PbrlError::InvalidArgument("policy pool must be nonempty".into()));
        }
        let cap = policies.len();
        Ok(Self {
            policies,
            descriptor: PoolDescriptor {
                mode: PoolMode::Sampled,
                cap,
                seed: 0,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn get(&self, i: usize) -> &MarkovPolicy {
        &self.policies[i]
    }
}

/// Number of deterministic Markov policies, `A^(S*H)`, or `None` on overflow.
pub fn deterministic_policy_count(num_states: usize, num_actions: usize, horizon: usize) -> Option<u128> {
    let exp = u32::try_from(num_states.checked_mul(horizon)?).ok()?;
    (num_actions as u128).checked_pow(exp)
}

pub fn enumerate_policy_pool(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    mode: PoolMode,
    cap: usize,
    seed: u64,
) -> Result<PolicyPool> {
    if cap == 0 {
        return Err(PbrlError::InvalidArgument("pool cap must be at least 1".into()));
    }
    if num_states == 0 || num_actions == 0 || horizon == 0 {
        return Err(PbrlError::InvalidArgument("S, A and H must be positive".into()));
    }
    let slots = num_states * horizon;
    let count = deterministic_policy_count(num_states, num_actions, horizon);
    let descriptor = PoolDescriptor { mode, cap, seed };
    let policies = match mode {
        PoolMode::Exhaustive => {
            let total = match count {
                Some(c) if c <= cap as u128 => c as usize,
                _ => {
                    return Err(PbrlError::CapExceeded {
                        count: count.map_or_else(
                            || format!("{num_actions}^{slots}"),
                            |c| c.to_string(),
                        ),
                        cap,
                    })
                }
            };
            (0..total)
                .map(|index| {
                    // Mixed-radix digits, most significant slot first.
                    let mut rest = index;
                    let mut actions = vec![0; slots];
                    for slot in (0..slots).rev() {
                        actions[slot] = rest % num_actions;
                        rest /= num_actions;
                    }
                    MarkovPolicy::deterministic(num_states, actions)
                })
                .collect()
        }
        PoolMode::Sampled => {
            if let Some(c) = count {
                if c < cap as u128 {
                    return Err(PbrlError::InvalidArgument(format!(
                        "cannot sample {cap} distinct policies out of {c}"
                    )));
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut seen = HashSet::with_capacity(cap);
            let mut out = Vec::with_capacity(cap);
            while out.len() < cap {
                let actions: Vec<usize> = (0..slots).map(|_| rng.gen_range(0..num_actions)).collect();
                if seen.insert(actions.clone()) {
                    out.push(MarkovPolicy::deterministic(num_states, actions));
                }
            }
            out
        }
    };
    Ok(PolicyPool {
        policies,
        descriptor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_chain() -> EpisodicMdp {
        // s0 -a0-> s0, s0 -a1-> s1, s1 -*-> s1
        EpisodicMdp::tabular(
            2,
            2,
            3,
            0,
            &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn deterministic_mdp_has_single_trajectory() {
        let mdp = two_state_chain();
        let pi = MarkovPolicy::deterministic(2, vec![1, 0, 0, 0, 0, 0]);
        let dist = trajectory_distribution(&mdp, &pi, DEFAULT_TRAJECTORY_CAP).unwrap();
        assert_eq!(dist.len(), 1);
        assert_eq!(dist.entries[0].1, 1.0);
        let rollout = &dist.entries[0].0;
        assert_eq!(rollout.trajectory.steps, vec![(0, 1), (1, 0), (1, 0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(&sample_rollout(&mdp, &pi, &mut rng), rollout);
    }

    #[test]
    fn single_step_law_only_lists_first_pair() {
        let mdp = EpisodicMdp::tabular(2, 1, 1, 0, &[0.3, 0.7, 0.5, 0.5]).unwrap();
        let pi = MarkovPolicy::deterministic(2, vec![0, 0]);
        let dist = trajectory_distribution(&mdp, &pi, 10).unwrap();
        let probs: Vec<f64> = dist.entries.iter().map(|e| e.1).collect();
        assert_eq!(probs, vec![0.3, 0.7]);
        for (rollout, _) in &dist.entries {
            assert_eq!(rollout.trajectory.steps, vec![(0, 0)]);
        }
        let marginal = dist.marginal();
        assert_eq!(marginal.len(), 1);
        assert!((marginal[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let mdp = EpisodicMdp::tabular(2, 1, 4, 0, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        let pi = MarkovPolicy::deterministic(2, vec![0; 8]);
        let err = trajectory_distribution(&mdp, &pi, 4).unwrap_err();
        assert!(matches!(err, PbrlError::EnumerationCapExceeded { cap: 4 }));
    }

    #[test]
    fn same_seed_same_trajectory() {
        let mdp = EpisodicMdp::tabular(2, 1, 5, 0, &[0.5, 0.5, 0.2, 0.8]).unwrap();
        let pi = MarkovPolicy::deterministic(2, vec![0; 10]);
        let a = sample_trajectory(&mdp, &pi, &mut ChaCha8Rng::seed_from_u64(3));
        let b = sample_trajectory(&mdp, &pi, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn pool_counts() {
        let p = enumerate_policy_pool(1, 2, 1, PoolMode::Exhaustive, DEFAULT_POOL_CAP, 0).unwrap();
        assert_eq!(p.len(), 2);
        let p = enumerate_policy_pool(2, 2, 2, PoolMode::Exhaustive, DEFAULT_POOL_CAP, 0).unwrap();
        assert_eq!(p.len(), 16);
        let distinct: HashSet<_> = p
            .policies
            .iter()
            .map(|pi| format!("{pi:?}"))
            .collect();
        assert_eq!(distinct.len(), 16);
        let err = enumerate_policy_pool(4, 3, 5, PoolMode::Exhaustive, 20_000, 0).unwrap_err();
        assert!(matches!(err, PbrlError::CapExceeded { .. }));
    }

    #[test]
    fn sampled_pool_is_distinct_and_seeded() {
        let a = enumerate_policy_pool(3, 2, 3, PoolMode::Sampled, 16, 5).unwrap();
        let b = enumerate_policy_pool(3, 2, 3, PoolMode::Sampled, 16, 5).unwrap();
        assert_eq!(a, b);
        let distinct: HashSet<_> = a.policies.iter().map(|pi| format!("{pi:?}")).collect();
        assert_eq!(distinct.len(), 16);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        assert!(EpisodicMdp::tabular(2, 1, 1, 0, &[0.5, 0.6, 0.5, 0.5]).is_err());
        assert!(EpisodicMdp::tabular(2, 1, 1, 0, &[-0.1, 1.1, 0.5, 0.5]).is_err());
    }

    #[test]
    fn mixture_bound_and_normalisation_are_checked() {
        // psi = e_{s'} / sqrt(2) on a single action, theta = sqrt(2) * P.
        let r = 1.0 / 2f64.sqrt();
        let psi = vec![
            vec![vec![vec![r, 0.0], vec![0.0, r]]],
            vec![vec![vec![r, 0.0], vec![0.0, r]]],
        ];
        let theta = vec![0.5 / r, 0.5 / r];
        let ok = EpisodicMdp::new(
            2,
            1,
            2,
            0,
            Kernel::LinearMixture {
                psi: psi.clone(),
                theta: theta.clone(),
                bound: 1.0,
            },
        );
        assert!(ok.is_ok());
        let too_small_bound = EpisodicMdp::new(
            2,
            1,
            2,
            0,
            Kernel::LinearMixture {
                psi,
                theta,
                bound: 0.5,
            },
        );
        assert!(too_small_bound.is_err());
        let unnormalised = vec![
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
        ];
        let err = EpisodicMdp::new(
            2,
            1,
            2,
            0,
            Kernel::LinearMixture {
                psi: unnormalised,
                theta: vec![0.5, 0.5],
                bound: 1.0,
            },
        );
        assert!(err.is_err());
    }

    #[test]
    fn tabular_embedding_reproduces_kernel() {
        let mdp = EpisodicMdp::tabular(2, 2, 2, 0, &[0.2, 0.8, 1.0, 0.0, 0.6, 0.4, 0.5, 0.5]).unwrap();
        let (features, theta, _) = mdp.transition_features();
        features.check_normalization().unwrap();
        let (table, moved) = features.projected_kernel(&theta);
        assert!(moved < 1e-12);
        for s in 0..2 {
            for a in 0..2 {
                for n in 0..2 {
                    assert!((table.prob(s, a, n) - mdp.table().prob(s, a, n)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let mdp = two_state_chain();
        let text = serde_json::to_string(&mdp).unwrap();
        assert!(text.contains("\"S\":2") && text.contains("\"tabular\""));
        let back: EpisodicMdp = serde_json::from_str(&text).unwrap();
        assert_eq!(back, mdp);
    }
}
