//! Optimistic pairwise and n-wise comparison agents.
//!
//! With `n = 2` this is the pairwise agent; larger `n` executes `n` policies
//! per episode and learns from all `n(n-1)/2` comparisons. The two share one
//! code path, so with equal confidence radii they produce identical runs.

use rand_chacha::ChaCha8Rng;

use crate::environment::{Environment, Oracle};
use crate::error::{PbrlError, Result};
use crate::estimator::{ConfidenceEllipsoid, Stream};
use crate::mdp::{Rollout, DEFAULT_TRAJECTORY_CAP};
use crate::planner::{
    build_policy_set, select_exploratory_tuple, ExpectationMode, LearnedTarget, PlanningModel, PolicySet,
    PoolEvaluation, ScoreToggles, Selection,
};

use super::learners::{TrajectoryLearner, TransitionLearner, TransitionPlan};
use super::{
    planning_seed, Agent, AgentConfig, BetaValues, BonusSums, Comparison, Coverage, EpisodeRecord, LogSizes,
    Observation,
};

pub struct PairwiseAgent {
    n: usize,
    toggles: ScoreToggles,
    pref: TrajectoryLearner,
    trans: TransitionLearner,
    planning: ExpectationMode,
    tuple_cap: usize,
    dump: bool,
    seed: u64,
    betas: BetaValues,
}

pub(crate) struct PairwisePlan {
    pub trans: TransitionPlan,
    pub ellipsoid: ConfidenceEllipsoid,
    pub set: PolicySet,
    pub selection: Selection,
    pub coverage: Coverage,
}

impl PairwiseAgent {
    pub fn new(config: &AgentConfig, env: &Environment, betas: BetaValues, toggles: ScoreToggles, seed: u64) -> Self {
        // Feedback turned into preferences is linear with half the feedback parameter.
        let truth = match &env.oracle {
            Oracle::Preference(m) => m.linear_truth(),
            Oracle::Feedback(m) => m.linear_truth().map(|t| t.iter().map(|v| v / 2.0).collect()),
        };
        let pref = TrajectoryLearner::new(
            Stream::Preference,
            env.learner_features(),
            betas.preference.unwrap_or(0.0),
            config.ridge,
            truth,
        );
        let trans = TransitionLearner::new(env, betas.transition.unwrap_or(0.0), config.ridge, config.vertex_search);
        Self {
            n: config.algorithm.comparisons(),
            toggles,
            pref,
            trans,
            planning: config.planning,
            tuple_cap: config.tuple_cap,
            dump: config.dump_estimator,
            seed,
            betas,
        }
    }

    pub(crate) fn plan(&self, env: &Environment, episode: usize) -> Result<PairwisePlan> {
        let trans = self.trans.plan()?;
        let (ellipsoid, pref_covered) = self.pref.fit()?;
        let model = PlanningModel {
            table: trans.table.clone(),
            horizon: env.mdp.horizon(),
            initial_state: env.mdp.initial_state(),
            features: self.pref.features.clone(),
            ellipsoid: ellipsoid.clone(),
            target: LearnedTarget::Preference,
            sa_bonus: trans.sa_bonus.clone(),
            toggles: self.toggles,
        };
        let mode = match self.planning {
            ExpectationMode::Exact => ExpectationMode::Exact,
            ExpectationMode::MonteCarlo { samples, seed } => ExpectationMode::MonteCarlo {
                samples,
                seed: planning_seed(self.seed ^ seed, episode),
            },
        };
        let eval = PoolEvaluation::new(&model, &env.pool, mode, DEFAULT_TRAJECTORY_CAP)?;
        let set = build_policy_set(&eval);
        if set.is_empty() {
            return Err(PbrlError::EmptyPolicySet);
        }
        let selection = select_exploratory_tuple(&set, self.n, &eval, self.tuple_cap)?;
        let coverage = Coverage {
            comparison: pref_covered,
            transition: Some(trans.covered),
        };
        Ok(PairwisePlan {
            trans,
            ellipsoid,
            set,
            selection,
            coverage,
        })
    }

    pub(crate) fn absorb(
        &mut self,
        episode: usize,
        plan: &PairwisePlan,
        rollouts: &[Rollout],
        bits: &[Comparison],
    ) -> Result<()> {
        for c in bits {
            self.pref
                .push_comparison(episode, &rollouts[c.i].trajectory, &rollouts[c.j].trajectory, c.o)?;
        }
        self.trans.absorb(episode, &plan.trans, rollouts)
    }

    pub(crate) fn record(
        &self,
        env: &Environment,
        episode: usize,
        plan: &PairwisePlan,
        rollouts: &[Rollout],
        observation: Observation,
    ) -> EpisodeRecord {
        let mut bonus = BonusSums::default();
        let xs: Vec<Vec<f64>> = rollouts.iter().map(|r| self.pref.features.features(&r.trajectory)).collect();
        for i in 0..xs.len() {
            for j in (i + 1)..xs.len() {
                let diff: Vec<f64> = xs[i].iter().zip(&xs[j]).map(|(a, b)| a - b).collect();
                bonus.comparison += plan.ellipsoid.width(&diff);
                bonus.comparison_raw += plan.ellipsoid.raw_width(&diff);
            }
        }
        for r in rollouts {
            let (raw, clipped) = self.trans.realized(&plan.trans, &r.trajectory);
            bonus.transition += clipped;
            bonus.transition_raw += raw;
        }
        let policies = plan.selection.policies.clone();
        EpisodeRecord {
            episode,
            regret: env.pbrl_regret(&policies),
            outer_regret: env.value_regret(&policies),
            policies,
            trajectories: rollouts.iter().map(|r| r.trajectory.clone()).collect(),
            observation,
            set_size: plan.set.len(),
            objective: plan.selection.objective,
            pistar_in_set: Some(plan.set.contains(env.pistar)),
            bonus,
            coverage: plan.coverage,
            approximate: plan.selection.approximate || plan.trans.approximate,
            kernel_projection: plan.trans.moved_mass,
            estimator: self
                .dump
                .then(|| vec![self.pref.dump(&plan.ellipsoid), self.trans.dump(&plan.trans)]),
            wall_time_ms: None,
        }
    }
}

impl Agent for PairwiseAgent {
    fn episode(&mut self, env: &Environment, episode: usize, rng: &mut ChaCha8Rng) -> Result<EpisodeRecord> {
        let plan = self.plan(env, episode)?;
        let rollouts: Vec<Rollout> = plan.selection.policies.iter().map(|&p| env.rollout(p, rng)).collect();
        let mut bits = Vec::with_capacity(self.n * (self.n - 1) / 2);
        for i in 0..rollouts.len() {
            for j in (i + 1)..rollouts.len() {
                let o = env.compare(&rollouts[i].trajectory, &rollouts[j].trajectory, rng)?;
                bits.push(Comparison { i, j, o });
            }
        }
        self.absorb(episode, &plan, &rollouts, &bits)?;
        Ok(self.record(env, episode, &plan, &rollouts, Observation::Preferences { bits }))
    }

    fn betas(&self) -> BetaValues {
        self.betas
    }

    fn log_sizes(&self) -> LogSizes {
        LogSizes {
            preference: self.pref.rows(),
            transition: self.trans.rows(),
            feedback: 0,
        }
    }
}
