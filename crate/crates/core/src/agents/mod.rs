//! Episode-loop controllers.
//!
//! Every agent plays one episode at a time against an [`Environment`]:
//! refit the estimators, build the near-optimal policy set, pick the
//! exploratory policies, roll them out in the true environment, observe the
//! oracle and append to the regression logs. All randomness on the
//! environment side comes from the run RNG passed to [`Agent::episode`], in a
//! fixed order (rollouts first, then observations), so a run is a pure
//! function of its configuration and seed.

mod baselines;
mod feedback;
mod learners;
mod pairwise;
mod reduction;

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{PbrlError, Result};
use crate::estimator::{BetaSchedule, ConfidenceEllipsoid, CoveringModel, Resolution, Stream, VertexSearch};
use crate::mdp::Trajectory;
use crate::planner::{ExpectationMode, ScoreToggles, DEFAULT_TUPLE_CAP};

pub use baselines::UniformAgent;
pub use feedback::FeedbackAgent;
pub use pairwise::PairwiseAgent;
pub use reduction::{reduce_feedback, ReductionAgent};

use learners::TransitionLearner;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Algorithm {
    Pbop,
    PbopPlus { n: usize },
    OncePerEpisode,
    /// Pairwise agent driven by trajectory feedback turned into preferences.
    Reduction,
    UniformRandom,
    /// Pairwise (or once-per-episode) agent with every bonus forced to 0.
    GreedyNoBonus,
}

impl Algorithm {
    pub fn name(&self) -> String {
        match self {
            Algorithm::Pbop => "pbop".into(),
            Algorithm::PbopPlus { n } => format!("pbop_plus_n{n}"),
            Algorithm::OncePerEpisode => "once_per_episode".into(),
            Algorithm::Reduction => "reduction".into(),
            Algorithm::UniformRandom => "uniform_random".into(),
            Algorithm::GreedyNoBonus => "greedy_no_bonus".into(),
        }
    }

    /// Policies executed per episode against a preference oracle.
    pub fn comparisons(&self) -> usize {
        match self {
            Algorithm::PbopPlus { n } => *n,
            _ => 2,
        }
    }
}

/// Per-stream confidence radii. In a config these override the schedule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BetaValues {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preference: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<f64>,
}

fn default_delta() -> f64 {
    0.05
}

fn default_c_beta() -> f64 {
    0.1
}

fn default_ridge() -> f64 {
    1.0
}

fn default_planning() -> ExpectationMode {
    ExpectationMode::Exact
}

fn default_search() -> VertexSearch {
    VertexSearch::Auto
}

fn default_tuple_cap() -> usize {
    DEFAULT_TUPLE_CAP
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_c_beta")]
    pub c_beta: f64,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default)]
    pub beta_override: BetaValues,
    #[serde(default = "default_planning")]
    pub planning: ExpectationMode,
    #[serde(default = "default_search")]
    pub vertex_search: VertexSearch,
    #[serde(default = "default_tuple_cap")]
    pub tuple_cap: usize,
    /// Embed estimator state in every episode record.
    #[serde(default = "default_true")]
    pub dump_estimator: bool,
}

impl AgentConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            delta: default_delta(),
            c_beta: default_c_beta(),
            ridge: default_ridge(),
            beta_override: BetaValues::default(),
            planning: default_planning(),
            vertex_search: default_search(),
            tuple_cap: default_tuple_cap(),
            dump_estimator: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Algorithm::PbopPlus { n } = self.algorithm {
            if n < 2 {
                return Err(PbrlError::InvalidArgument("pbop_plus needs n >= 2".into()));
            }
        }
        if !(self.ridge > 0.0) {
            return Err(PbrlError::InvalidArgument("ridge must be positive".into()));
        }
        for v in [self.beta_override.preference, self.beta_override.transition, self.beta_override.feedback]
            .into_iter()
            .flatten()
        {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PbrlError::InvalidArgument(format!("invalid beta override {v}")));
            }
        }
        Ok(())
    }
}

// ── Episode records ─────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub i: usize,
    pub j: usize,
    pub o: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Observation {
    Preferences { bits: Vec<Comparison> },
    Feedback { y: Vec<u8> },
    /// Two feedback bits and the preference derived from them.
    Reduction { y: Vec<u8>, o: u8 },
}

/// Bonuses evaluated on the trajectories actually executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BonusSums {
    /// `sum_{i<j} b_T(t_i, t_j)`, or `sum_i b_G(t_i)`.
    pub comparison: f64,
    /// `sum_i b_P(t_i)`, each term clipped to 1.
    pub transition: f64,
    pub comparison_raw: f64,
    pub transition_raw: f64,
}

/// Whether the true parameters passed the sum-of-squares test this episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub comparison: Option<bool>,
    pub transition: Option<bool>,
}

impl Coverage {
    /// Joint verdict, `None` when neither stream could be checked.
    pub fn joint(&self) -> Option<bool> {
        match (self.comparison, self.transition) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(true) && b.unwrap_or(true)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamDump {
    pub stream: Stream,
    pub center: Vec<f64>,
    pub gram: Vec<Vec<f64>>,
    pub beta: f64,
    pub count: usize,
}

impl StreamDump {
    pub(crate) fn new(stream: Stream, ell: &ConfidenceEllipsoid) -> Self {
        Self {
            stream,
            center: ell.center_vec(),
            gram: matrix_rows(ell.gram()),
            beta: ell.radius(),
            count: ell.count(),
        }
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// 1-based episode index.
    pub episode: usize,
    /// Pool indices of the executed policies.
    pub policies: Vec<usize>,
    pub trajectories: Vec<Trajectory>,
    pub observation: Observation,
    /// `|S_k|` (the pool size for agents that do not build a set).
    pub set_size: usize,
    pub objective: f64,
    /// Preference regret `sum_i (T(pi*, pi_i) - 1/2)` against a preference
    /// oracle, value regret against a feedback oracle.
    pub regret: f64,
    /// Value regret of the outer problem, for the reduction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_regret: Option<f64>,
    pub pistar_in_set: Option<bool>,
    pub bonus: BonusSums,
    pub coverage: Coverage,
    pub approximate: bool,
    /// Probability mass moved when projecting the estimated kernel.
    pub kernel_projection: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<Vec<StreamDump>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

/// Sizes of the regression logs, for accounting checks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogSizes {
    pub preference: usize,
    pub transition: usize,
    pub feedback: usize,
}

pub trait Agent: Send {
    /// Plays episode `episode` (1-based).
    fn episode(&mut self, env: &Environment, episode: usize, rng: &mut ChaCha8Rng) -> Result<EpisodeRecord>;

    /// Confidence radii in use.
    fn betas(&self) -> BetaValues;

    fn log_sizes(&self) -> LogSizes;
}

/// Confidence radii for an agent on an environment with budget `episodes`.
pub fn resolve_betas(config: &AgentConfig, env: &Environment, episodes: usize) -> Result<BetaValues> {
    let n = config.algorithm.comparisons();
    let resolution = match config.algorithm {
        Algorithm::PbopPlus { .. } => Resolution::NWise,
        _ => Resolution::PerEpisode,
    };
    let schedule = |covering: CoveringModel| {
        BetaSchedule::new(episodes, config.delta, covering, config.c_beta, n, resolution)
    };
    let dim = env.learner_features().dim();
    let (l, s) = env.comparison_class_bounds();
    let transition = match config.beta_override.transition {
        Some(v) => v,
        None => schedule(TransitionLearner::covering(env))?.beta(Stream::Transition),
    };
    let mut out = BetaValues {
        transition: Some(transition),
        ..BetaValues::default()
    };
    let uses_preferences = match config.algorithm {
        Algorithm::UniformRandom => return Ok(BetaValues::default()),
        Algorithm::OncePerEpisode => false,
        Algorithm::GreedyNoBonus => !env.is_feedback(),
        _ => true,
    };
    if uses_preferences {
        // Feedback converted to preferences has parameter theta_G / 2 on
        // feature differences bounded by 2 L_G.
        let (l, s) = if env.is_feedback() { (2.0 * l, s / 2.0) } else { (l, s) };
        out.preference = Some(match config.beta_override.preference {
            Some(v) => v,
            None => schedule(CoveringModel::AnalyticLinear {
                dim,
                feature_bound: l,
                param_bound: s,
            })?
            .beta(Stream::Preference),
        });
    } else {
        out.feedback = Some(match config.beta_override.feedback {
            Some(v) => v,
            None => schedule(CoveringModel::AnalyticLinear {
                dim,
                feature_bound: l,
                param_bound: s,
            })?
            .beta(Stream::Feedback),
        });
    }
    Ok(out)
}

/// Builds the agent described by `config` for `env`.
pub fn build_agent(config: &AgentConfig, env: &Environment, episodes: usize, seed: u64) -> Result<Box<dyn Agent>> {
    config.validate()?;
    let betas = resolve_betas(config, env, episodes)?;
    let require = |ok: bool, what: &str, oracle: &str| -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(PbrlError::InvalidArgument(format!("{what} needs a {oracle} oracle")))
        }
    };
    Ok(match &config.algorithm {
        Algorithm::Pbop | Algorithm::PbopPlus { .. } => {
            require(!env.is_feedback(), "pbop", "preference")?;
            Box::new(PairwiseAgent::new(config, env, betas, ScoreToggles::default(), seed))
        }
        Algorithm::GreedyNoBonus if env.is_feedback() => {
            Box::new(FeedbackAgent::new(config, env, betas, ScoreToggles::no_bonus(), seed))
        }
        Algorithm::GreedyNoBonus => Box::new(PairwiseAgent::new(config, env, betas, ScoreToggles::no_bonus(), seed)),
        Algorithm::OncePerEpisode => {
            require(env.is_feedback(), "once_per_episode", "feedback")?;
            Box::new(FeedbackAgent::new(config, env, betas, ScoreToggles::default(), seed))
        }
        Algorithm::Reduction => {
            require(env.is_feedback(), "reduction", "feedback")?;
            Box::new(ReductionAgent::new(config, env, betas, seed))
        }
        Algorithm::UniformRandom => Box::new(UniformAgent::new(env)),
    })
}

/// Seed for planner-internal sampling in episode `k`.
pub(crate) fn planning_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(episode as u64)
}
