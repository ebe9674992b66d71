//! Optimistic agent for once-per-episode trajectory feedback.

use rand_chacha::ChaCha8Rng;

use crate::environment::{Environment, Oracle};
use crate::error::{PbrlError, Result};
use crate::estimator::Stream;
use crate::mdp::DEFAULT_TRAJECTORY_CAP;
use crate::planner::{
    build_policy_set, select_exploratory_single, ExpectationMode, LearnedTarget, PlanningModel, PoolEvaluation,
    ScoreToggles,
};

use super::learners::{TrajectoryLearner, TransitionLearner};
use super::{planning_seed, Agent, AgentConfig, BetaValues, BonusSums, Coverage, EpisodeRecord, LogSizes, Observation};

pub struct FeedbackAgent {
    toggles: ScoreToggles,
    fb: TrajectoryLearner,
    trans: TransitionLearner,
    planning: ExpectationMode,
    dump: bool,
    seed: u64,
    betas: BetaValues,
}

impl FeedbackAgent {
    pub fn new(config: &AgentConfig, env: &Environment, betas: BetaValues, toggles: ScoreToggles, seed: u64) -> Self {
        let truth = match &env.oracle {
            Oracle::Feedback(m) => m.linear_truth(),
            Oracle::Preference(_) => None,
        };
        Self {
            toggles,
            fb: TrajectoryLearner::new(
                Stream::Feedback,
                env.learner_features(),
                betas.feedback.unwrap_or(0.0),
                config.ridge,
                truth,
            ),
            trans: TransitionLearner::new(env, betas.transition.unwrap_or(0.0), config.ridge, config.vertex_search),
            planning: config.planning,
            dump: config.dump_estimator,
            seed,
            betas,
        }
    }
}

impl Agent for FeedbackAgent {
    fn episode(&mut self, env: &Environment, episode: usize, rng: &mut ChaCha8Rng) -> Result<EpisodeRecord> {
        let trans = self.trans.plan()?;
        let (ellipsoid, fb_covered) = self.fb.fit()?;
        let model = PlanningModel {
            table: trans.table.clone(),
            horizon: env.mdp.horizon(),
            initial_state: env.mdp.initial_state(),
            features: self.fb.features.clone(),
            ellipsoid: ellipsoid.clone(),
            target: LearnedTarget::Feedback,
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
        let selection = select_exploratory_single(&set, &eval)?;
        let policy = selection.policies[0];

        let rollout = env.rollout(policy, rng);
        let y = env.feedback(&rollout.trajectory, rng)?;
        self.fb.push_feedback(episode, &rollout.trajectory, y)?;
        self.trans.absorb(episode, &trans, std::slice::from_ref(&rollout))?;

        let x = self.fb.features.features(&rollout.trajectory);
        let (raw, clipped) = self.trans.realized(&trans, &rollout.trajectory);
        let bonus = BonusSums {
            comparison: ellipsoid.width(&x),
            transition: clipped,
            comparison_raw: ellipsoid.raw_width(&x),
            transition_raw: raw,
        };
        let regret = env.value_regret(&[policy]).unwrap_or(0.0);
        Ok(EpisodeRecord {
            episode,
            policies: vec![policy],
            trajectories: vec![rollout.trajectory],
            observation: Observation::Feedback { y: vec![y] },
            set_size: set.len(),
            objective: selection.objective,
            regret,
            outer_regret: None,
            pistar_in_set: Some(set.contains(env.pistar)),
            bonus,
            coverage: Coverage {
                comparison: fb_covered,
                transition: Some(trans.covered),
            },
            approximate: trans.approximate,
            kernel_projection: trans.moved_mass,
            estimator: self
                .dump
                .then(|| vec![self.fb.dump(&ellipsoid), self.trans.dump(&trans)]),
            wall_time_ms: None,
        })
    }

    fn betas(&self) -> BetaValues {
        self.betas
    }

    fn log_sizes(&self) -> LogSizes {
        LogSizes {
            preference: 0,
            transition: self.trans.rows(),
            feedback: self.fb.rows(),
        }
    }
}
