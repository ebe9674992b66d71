//! Uniform-random control: executes uniformly drawn pool policies and
//! ignores everything it observes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::environment::Environment;
use crate::error::Result;
use crate::mdp::Rollout;

use super::{Agent, BetaValues, BonusSums, Comparison, Coverage, EpisodeRecord, LogSizes, Observation};

pub struct UniformAgent {
    draws: usize,
}

impl UniformAgent {
    /// Two policies per episode against a preference oracle, one against a
    /// feedback oracle.
    pub fn new(env: &Environment) -> Self {
        Self {
            draws: if env.is_feedback() { 1 } else { 2 },
        }
    }
}

impl Agent for UniformAgent {
    fn episode(&mut self, env: &Environment, episode: usize, rng: &mut ChaCha8Rng) -> Result<EpisodeRecord> {
        let policies: Vec<usize> = (0..self.draws).map(|_| rng.gen_range(0..env.pool.len())).collect();
        let rollouts: Vec<Rollout> = policies.iter().map(|&p| env.rollout(p, rng)).collect();
        let (observation, regret) = if env.is_feedback() {
            let y = rollouts
                .iter()
                .map(|r| env.feedback(&r.trajectory, rng))
                .collect::<Result<Vec<u8>>>()?;
            (Observation::Feedback { y }, env.value_regret(&policies).unwrap_or(0.0))
        } else {
            let o = env.compare(&rollouts[0].trajectory, &rollouts[1].trajectory, rng)?;
            (
                Observation::Preferences {
                    bits: vec![Comparison { i: 0, j: 1, o }],
                },
                env.pbrl_regret(&policies),
            )
        };
        Ok(EpisodeRecord {
            episode,
            policies,
            trajectories: rollouts.into_iter().map(|r| r.trajectory).collect(),
            observation,
            set_size: env.pool.len(),
            objective: 0.0,
            regret,
            outer_regret: None,
            pistar_in_set: None,
            bonus: BonusSums::default(),
            coverage: Coverage::default(),
            approximate: false,
            kernel_projection: 0.0,
            estimator: None,
            wall_time_ms: None,
        })
    }

    fn betas(&self) -> BetaValues {
        BetaValues::default()
    }

    fn log_sizes(&self) -> LogSizes {
        LogSizes::default()
    }
}
