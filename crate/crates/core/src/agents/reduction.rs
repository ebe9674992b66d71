//! Pairwise learning from once-per-episode feedback.
//!
//! Both policies of the pair are executed and each trajectory receives its
//! own feedback bit. The bits become one preference: the strict winner if
//! they differ, otherwise a fair coin. Then
//! `Pr(o = 1) = (Pr(y1 = 1) - Pr(y2 = 1) + 1) / 2`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::environment::Environment;
use crate::error::Result;
use crate::mdp::Rollout;
use crate::planner::ScoreToggles;
use crate::preference::bernoulli;

use super::pairwise::PairwiseAgent;
use super::{Agent, AgentConfig, BetaValues, Comparison, EpisodeRecord, LogSizes, Observation};

/// `1(y1 > y2)` when the bits differ, a fair coin otherwise.
pub fn reduce_feedback<R: Rng + ?Sized>(y1: u8, y2: u8, rng: &mut R) -> u8 {
    if y1 != y2 {
        u8::from(y1 > y2)
    } else {
        bernoulli(0.5, rng)
    }
}

pub struct ReductionAgent {
    inner: PairwiseAgent,
}

impl ReductionAgent {
    pub fn new(config: &AgentConfig, env: &Environment, betas: BetaValues, seed: u64) -> Self {
        Self {
            inner: PairwiseAgent::new(config, env, betas, ScoreToggles::default(), seed),
        }
    }
}

impl Agent for ReductionAgent {
    fn episode(&mut self, env: &Environment, episode: usize, rng: &mut ChaCha8Rng) -> Result<EpisodeRecord> {
        let plan = self.inner.plan(env, episode)?;
        let rollouts: Vec<Rollout> = plan.selection.policies.iter().map(|&p| env.rollout(p, rng)).collect();
        let y1 = env.feedback(&rollouts[0].trajectory, rng)?;
        let y2 = env.feedback(&rollouts[1].trajectory, rng)?;
        let o = reduce_feedback(y1, y2, rng);
        let bits = [Comparison { i: 0, j: 1, o }];
        self.inner.absorb(episode, &plan, &rollouts, &bits)?;
        Ok(self.inner.record(
            env,
            episode,
            &plan,
            &rollouts,
            Observation::Reduction { y: vec![y1, y2], o },
        ))
    }

    fn betas(&self) -> BetaValues {
        self.inner.betas()
    }

    fn log_sizes(&self) -> LogSizes {
        self.inner.log_sizes()
    }
}
