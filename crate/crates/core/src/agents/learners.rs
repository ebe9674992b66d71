//! Estimation state shared by the learning agents.

use crate::environment::Environment;
use crate::error::Result;
use crate::estimator::{
    model_in_confidence_set_gram, select_target_value, ConfidenceEllipsoid, CoveringModel, RegressionLog,
    Stream, TargetValue, VertexSearch,
};
use crate::mdp::{Rollout, TransitionFeatures, TransitionTable, Trajectory};
use crate::preference::TrajectoryFeatureMap;

use super::StreamDump;

/// Value-targeted regression for the transition model.
#[derive(Clone, Debug)]
pub(crate) struct TransitionLearner {
    features: TransitionFeatures,
    truth: Vec<f64>,
    log: RegressionLog,
    beta: f64,
    ridge: f64,
    search: VertexSearch,
}

/// Everything derived from the transition ellipsoid in one episode.
#[derive(Clone, Debug)]
pub(crate) struct TransitionPlan {
    pub ellipsoid: ConfidenceEllipsoid,
    /// `V_max` per `(s, a)`, laid out as `[s * A + a]`.
    pub targets: Vec<TargetValue>,
    pub sa_bonus: Vec<f64>,
    pub table: TransitionTable,
    pub moved_mass: f64,
    pub covered: bool,
    pub approximate: bool,
}

impl TransitionLearner {
    pub fn new(env: &Environment, beta: f64, ridge: f64, search: VertexSearch) -> Self {
        let (features, truth, _) = env.mdp.transition_features();
        let dim = features.dim();
        Self {
            features,
            truth,
            log: RegressionLog::new(Stream::Transition, dim, 0.0),
            beta,
            ridge,
            search,
        }
    }

    pub fn covering(env: &Environment) -> CoveringModel {
        let (features, _, bound) = env.mdp.transition_features();
        CoveringModel::AnalyticLinear {
            dim: features.dim(),
            feature_bound: 1.0,
            param_bound: bound,
        }
    }

    pub fn rows(&self) -> usize {
        self.log.len()
    }

    pub fn plan(&self) -> Result<TransitionPlan> {
        let ellipsoid = ConfidenceEllipsoid::fit(&self.log, self.ridge, self.beta)?;
        let (ns, na) = (self.features.num_states(), self.features.num_actions());
        let mut targets = Vec::with_capacity(ns * na);
        for s in 0..ns {
            for a in 0..na {
                targets.push(select_target_value(&ellipsoid, &self.features, s, a, self.search)?);
            }
        }
        let sa_bonus = targets.iter().map(|t| t.bonus).collect();
        let approximate = targets.iter().any(|t| !t.exact);
        let (table, moved_mass) = self.features.projected_kernel(ellipsoid.center().as_slice());
        let covered = model_in_confidence_set_gram(&ellipsoid, &self.truth, &self.log).inside;
        Ok(TransitionPlan {
            ellipsoid,
            targets,
            sa_bonus,
            table,
            moved_mass,
            covered,
            approximate,
        })
    }

    /// Appends one row per visited step, targeting this episode's `V_max`.
    pub fn absorb(&mut self, episode: usize, plan: &TransitionPlan, rollouts: &[Rollout]) -> Result<()> {
        let na = self.features.num_actions();
        for rollout in rollouts {
            for (s, a, next) in rollout.transitions() {
                let target = &plan.targets[s * na + a];
                let x = self.features.value_feature(s, a, &target.value);
                self.log.push(episode, x, target.value[next])?;
            }
        }
        Ok(())
    }

    /// Unclipped `sum_h` of raw transition widths and its clipped counterpart.
    pub fn realized(&self, plan: &TransitionPlan, traj: &Trajectory) -> (f64, f64) {
        let na = self.features.num_actions();
        let mut raw = 0.0;
        let mut clipped = 0.0;
        for &(s, a) in &traj.steps {
            raw += plan.targets[s * na + a].raw;
            clipped += plan.targets[s * na + a].bonus;
        }
        (raw, clipped.min(1.0))
    }

    pub fn dump(&self, plan: &TransitionPlan) -> StreamDump {
        StreamDump::new(Stream::Transition, &plan.ellipsoid)
    }
}

/// Least squares on trajectory-level features, for preferences
/// (`x(t1) - x(t2)` against `o - 1/2`) or feedback (`x(t)` against `y`).
#[derive(Clone, Debug)]
pub(crate) struct TrajectoryLearner {
    pub features: TrajectoryFeatureMap,
    log: RegressionLog,
    beta: f64,
    ridge: f64,
    truth: Option<Vec<f64>>,
}

impl TrajectoryLearner {
    pub fn new(
        stream: Stream,
        features: TrajectoryFeatureMap,
        beta: f64,
        ridge: f64,
        truth: Option<Vec<f64>>,
    ) -> Self {
        let offset = if stream == Stream::Preference { 0.5 } else { 0.0 };
        let log = RegressionLog::new(stream, features.dim(), offset);
        Self {
            features,
            log,
            beta,
            ridge,
            truth,
        }
    }

    pub fn rows(&self) -> usize {
        self.log.len()
    }

    pub fn fit(&self) -> Result<(ConfidenceEllipsoid, Option<bool>)> {
        let ell = ConfidenceEllipsoid::fit(&self.log, self.ridge, self.beta)?;
        let covered = self
            .truth
            .as_ref()
            .map(|t| model_in_confidence_set_gram(&ell, t, &self.log).inside);
        Ok((ell, covered))
    }

    pub fn push_comparison(&mut self, episode: usize, t1: &Trajectory, t2: &Trajectory, o: u8) -> Result<()> {
        let x1 = self.features.features(t1);
        let x2 = self.features.features(t2);
        let diff = x1.iter().zip(&x2).map(|(a, b)| a - b).collect();
        self.log.push(episode, diff, f64::from(o))
    }

    pub fn push_feedback(&mut self, episode: usize, t: &Trajectory, y: u8) -> Result<()> {
        self.log.push(episode, self.features.features(t), f64::from(y))
    }

    pub fn dump(&self, ell: &ConfidenceEllipsoid) -> StreamDump {
        StreamDump::new(self.log.stream(), ell)
    }
}
