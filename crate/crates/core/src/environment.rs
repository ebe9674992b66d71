//! A fully specified learning problem: MDP, hidden oracle and policy pool,
//! plus the exact ground-truth quantities used for regret accounting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PbrlError, Result};
use crate::mdp::{l2_norm, sample_rollout, EpisodicMdp, PolicyPool, Rollout, Trajectory};
use crate::preference::{
    bernoulli, condorcet_from_matrix, policy_value, preference_matrix, FeedbackKind, FeedbackModel,
    PreferenceKind, PreferenceModel, TrajectoryFeatureMap,
};

/// The hidden signal an environment emits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Oracle {
    Preference(PreferenceModel),
    Feedback(FeedbackModel),
}

impl Oracle {
    pub fn validate_for(&self, mdp: &EpisodicMdp) -> Result<()> {
        match self {
            Oracle::Preference(m) => m.validate_for(mdp),
            Oracle::Feedback(m) => m.validate_for(mdp),
        }
    }

    pub fn learner_features(&self, mdp: &EpisodicMdp) -> TrajectoryFeatureMap {
        match self {
            Oracle::Preference(m) => m.learner_features(mdp),
            Oracle::Feedback(m) => m.learner_features(mdp),
        }
    }
}

/// Environment as stored on disk: the MDP fields and the oracle fields share
/// one JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    #[serde(flatten)]
    pub mdp: EpisodicMdp,
    #[serde(flatten)]
    pub oracle: Oracle,
}

#[derive(Clone, Debug)]
pub struct Environment {
    pub mdp: EpisodicMdp,
    pub oracle: Oracle,
    pub pool: PolicyPool,
    /// Pool index of the Condorcet winner (the value maximiser for feedback).
    pub pistar: usize,
    /// Exact `T(pool_i, pool_j)`; for feedback oracles the implied
    /// `(V_i - V_j + 1) / 2`.
    pub pref_matrix: Vec<Vec<f64>>,
    /// Exact `V^pi(s1)` for feedback oracles.
    pub values: Option<Vec<f64>>,
    pub trajectory_cap: usize,
}

impl Environment {
    pub fn new(mdp: EpisodicMdp, oracle: Oracle, pool: PolicyPool, trajectory_cap: usize) -> Result<Self> {
        oracle.validate_for(&mdp)?;
        for pi in &pool.policies {
            pi.check_compatible(&mdp)?;
        }
        if pool.is_empty() {
            return Err(PbrlError::InvalidArgument("empty policy pool".into()));
        }
        let (pref_matrix, values, pistar) = match &oracle {
            Oracle::Preference(model) => {
                let m = preference_matrix(model, &mdp, &pool, trajectory_cap)?;
                let pistar = condorcet_from_matrix(&m)?;
                (m, None, pistar)
            }
            Oracle::Feedback(model) => {
                let values = pool
                    .policies
                    .iter()
                    .map(|pi| policy_value(model, &mdp, pi, trajectory_cap))
                    .collect::<Result<Vec<f64>>>()?;
                let mut pistar = 0;
                for (i, v) in values.iter().enumerate() {
                    if *v > values[pistar] {
                        pistar = i;
                    }
                }
                let m = values
                    .iter()
                    .map(|vi| values.iter().map(|vj| (vi - vj + 1.0) / 2.0).collect())
                    .collect();
                (m, Some(values), pistar)
            }
        };
        Ok(Self {
            mdp,
            oracle,
            pool,
            pistar,
            pref_matrix,
            values,
            trajectory_cap,
        })
    }

    pub fn from_instance(instance: Instance, pool: PolicyPool, trajectory_cap: usize) -> Result<Self> {
        Self::new(instance.mdp, instance.oracle, pool, trajectory_cap)
    }

    pub fn is_feedback(&self) -> bool {
        matches!(self.oracle, Oracle::Feedback(_))
    }

    pub fn learner_features(&self) -> TrajectoryFeatureMap {
        self.oracle.learner_features(&self.mdp)
    }

    /// `sum_i (T(pi*, pi_i) - 1/2)` for the executed policies.
    pub fn pbrl_regret(&self, policies: &[usize]) -> f64 {
        policies
            .iter()
            .map(|&i| self.pref_matrix[self.pistar][i] - 0.5)
            .sum()
    }

    /// `sum_i (V* - V^{pi_i})`, for feedback oracles.
    pub fn value_regret(&self, policies: &[usize]) -> Option<f64> {
        let values = self.values.as_ref()?;
        let best = values[self.pistar];
        Some(policies.iter().map(|&i| best - values[i]).sum())
    }

    pub fn rollout<R: Rng + ?Sized>(&self, policy: usize, rng: &mut R) -> Rollout {
        sample_rollout(&self.mdp, self.pool.get(policy), rng)
    }

    /// Draws `o ~ Bernoulli(T(t1, t2))`.
    pub fn compare<R: Rng + ?Sized>(&self, t1: &Trajectory, t2: &Trajectory, rng: &mut R) -> Result<u8> {
        match &self.oracle {
            Oracle::Preference(m) => Ok(m.sample_preference(t1, t2, rng)),
            Oracle::Feedback(_) => Err(PbrlError::InvalidArgument(
                "environment emits trajectory feedback, not preferences".into(),
            )),
        }
    }

    /// Draws `y ~ Bernoulli(g*(t))`.
    pub fn feedback<R: Rng + ?Sized>(&self, t: &Trajectory, rng: &mut R) -> Result<u8> {
        match &self.oracle {
            Oracle::Feedback(m) => Ok(bernoulli(m.feedback_value(t), rng)),
            Oracle::Preference(_) => Err(PbrlError::InvalidArgument(
                "environment emits preferences, not trajectory feedback".into(),
            )),
        }
    }

    /// Learner-side parameter bound for the trajectory-level function class
    /// in the learner's features, together with the feature bound `L`.
    ///
    /// Preference classes are `1/2 + (x1 - x2)^T theta`, so `L` bounds
    /// `||x1 - x2||`; feedback classes are `x^T theta` with `L` bounding `||x||`.
    pub fn comparison_class_bounds(&self) -> (f64, f64) {
        let features = self.learner_features();
        let max_x = features.norm_bound(&self.mdp);
        let sa = ((self.mdp.num_states() * self.mdp.num_actions()) as f64).sqrt();
        let h = self.mdp.horizon() as f64;
        match &self.oracle {
            Oracle::Preference(m) => {
                let l = 2.0 * max_x;
                let s = match (&m.kind, &m.features) {
                    (PreferenceKind::UtilityBased { .. }, None) => sa / (2.0 * h),
                    _ if l > 0.0 => 1.0 / (2.0 * l),
                    _ => 0.0,
                };
                (l, s)
            }
            Oracle::Feedback(m) => {
                let s = match (&m.kind, &m.features) {
                    (FeedbackKind::UtilitySum { .. }, None) => sa / h,
                    (FeedbackKind::LinearClipped { theta }, _) if max_x > 0.0 => (1.0 / max_x).max(l2_norm(theta)),
                    _ => 0.0,
                };
                (max_x, s)
            }
        }
    }
}
