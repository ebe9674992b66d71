//! Random environment generation with Condorcet rejection.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, Oracle};
use crate::error::{PbrlError, Result};
use crate::mdp::{enumerate_policy_pool, EpisodicMdp, Kernel, PoolMode, DEFAULT_TRAJECTORY_CAP};
use crate::preference::{FeedbackModel, PreferenceModel, TrajectoryFeatureMap};

fn default_true() -> bool {
    true
}

fn default_attempts() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TransitionFamily {
    /// Rows drawn uniformly from the simplex.
    Tabular,
    /// Mixture of `dim` random tabular kernels with simplex weights.
    LinearMixture { dim: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OracleFamily {
    /// Step-sum features in `[-1,1]^dim`, parameter at the largest norm the
    /// range constraint allows.
    LinearPreference { dim: usize },
    /// Same features with a logistic link; `scale` multiplies the margin.
    LogisticPreference { dim: usize, scale: f64 },
    /// Per-step rewards uniform in `[0, 1/H]`.
    UtilityPreference,
    /// Nonnegative step-sum features and a unit-norm nonnegative parameter.
    LinearFeedback { dim: usize },
    UtilityFeedback,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub transitions: TransitionFamily,
    pub oracle: OracleFamily,
    pub pool_mode: PoolMode,
    pub pool_cap: usize,
    /// Generator seed; the run seed is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_true")]
    pub reject_without_condorcet: bool,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub seed: u64,
    /// Draws rejected for lacking a Condorcet winner.
    pub rejections: usize,
}

fn simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn random_kernel<R: Rng + ?Sized>(ns: usize, na: usize, rng: &mut R) -> Vec<Vec<Vec<f64>>> {
    (0..ns)
        .map(|_| (0..na).map(|_| simplex(ns, rng)).collect())
        .collect()
}

fn draw_mdp<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<EpisodicMdp> {
    let (ns, na, h) = (spec.num_states, spec.num_actions, spec.horizon);
    let kernel = match spec.transitions {
        TransitionFamily::Tabular => Kernel::Tabular {
            p: random_kernel(ns, na, rng),
        },
        TransitionFamily::LinearMixture { dim } => {
            if dim == 0 {
                return Err(PbrlError::InvalidArgument("mixture dimension must be positive".into()));
            }
            // psi = (P_1, .., P_d) / sqrt(d) keeps ||sum psi V|| <= 1, and
            // theta = sqrt(d) w recovers sum_i w_i P_i.
            let bases: Vec<_> = (0..dim).map(|_| random_kernel(ns, na, rng)).collect();
            let scale = (dim as f64).sqrt();
            let psi = (0..ns)
                .map(|s| {
                    (0..na)
                        .map(|a| {
                            (0..ns)
                                .map(|n| bases.iter().map(|b| b[s][a][n] / scale).collect())
                                .collect()
                        })
                        .collect()
                })
                .collect();
            let theta = simplex(dim, rng).into_iter().map(|w| w * scale).collect();
            Kernel::LinearMixture {
                psi,
                theta,
                bound: scale,
            }
        }
    };
    EpisodicMdp::new(ns, na, h, 0, kernel)
}

fn step_features<R: Rng + ?Sized>(ns: usize, na: usize, dim: usize, lo: f64, rng: &mut R) -> Vec<Vec<Vec<f64>>> {
    (0..ns)
        .map(|_| {
            (0..na)
                .map(|_| (0..dim).map(|_| rng.gen_range(lo..=1.0)).collect())
                .collect()
        })
        .collect()
}

fn unit_direction<R: Rng + ?Sized>(dim: usize, nonnegative: bool, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| if nonnegative { rng.gen::<f64>() } else { rng.gen_range(-1.0..=1.0) })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn draw_oracle<R: Rng + ?Sized>(spec: &GeneratorSpec, mdp: &EpisodicMdp, rng: &mut R) -> Result<Oracle> {
    let (ns, na, h) = (spec.num_states, spec.num_actions, spec.horizon);
    let rewards = |rng: &mut R| -> Vec<Vec<f64>> {
        (0..ns)
            .map(|_| (0..na).map(|_| rng.gen::<f64>() / h as f64).collect())
            .collect()
    };
    Ok(match spec.oracle {
        OracleFamily::LinearPreference { dim } | OracleFamily::LogisticPreference { dim, .. } => {
            let features = TrajectoryFeatureMap::StepSum {
                phi: step_features(ns, na, dim, -1.0, rng),
            };
            let bound = 2.0 * features.norm_bound(mdp);
            let dir = unit_direction(dim, false, rng);
            match spec.oracle {
                OracleFamily::LogisticPreference { scale, .. } => {
                    let theta = dir.into_iter().map(|x| x * scale / bound.max(1e-12)).collect();
                    Oracle::Preference(PreferenceModel::logistic(theta, features))
                }
                _ => {
                    // Largest norm with 1/2 + L ||theta|| <= 1, shrunk slightly for round-off.
                    let norm = (1.0 - 1e-9) / (2.0 * bound.max(1e-12));
                    let theta = dir.into_iter().map(|x| x * norm).collect();
                    Oracle::Preference(PreferenceModel::linear(theta, features))
                }
            }
        }
        OracleFamily::UtilityPreference => Oracle::Preference(PreferenceModel::utility(rewards(rng))),
        OracleFamily::LinearFeedback { dim } => {
            let raw = TrajectoryFeatureMap::StepSum {
                phi: step_features(ns, na, dim, 0.0, rng),
            };
            let bound = raw.norm_bound(mdp).max(1e-12);
            let phi = match raw {
                TrajectoryFeatureMap::StepSum { phi } => phi
                    .into_iter()
                    .map(|row| row.into_iter().map(|v| v.into_iter().map(|x| x / bound).collect()).collect())
                    .collect(),
                TrajectoryFeatureMap::Table(_) => unreachable!("step-sum features"),
            };
            let theta = unit_direction(dim, true, rng);
            Oracle::Feedback(FeedbackModel::linear_clipped(theta, TrajectoryFeatureMap::StepSum { phi }))
        }
        OracleFamily::UtilityFeedback => Oracle::Feedback(FeedbackModel::utility_sum(rewards(rng))),
    })
}

/// Draws environments until one has a Condorcet winner in its pool.
pub fn generate_environment(spec: &GeneratorSpec, run_seed: u64) -> Result<(Environment, GenerationReport)> {
    let seed = spec.seed.unwrap_or(run_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejections = 0;
    loop {
        let mdp = draw_mdp(spec, &mut rng)?;
        let oracle = draw_oracle(spec, &mdp, &mut rng)?;
        let pool_seed: u64 = rng.gen();
        let pool = enumerate_policy_pool(
            spec.num_states,
            spec.num_actions,
            spec.horizon,
            spec.pool_mode,
            spec.pool_cap,
            pool_seed,
        )?;
        match Environment::new(mdp, oracle, pool, DEFAULT_TRAJECTORY_CAP) {
            Ok(env) => return Ok((env, GenerationReport { seed, rejections })),
            Err(PbrlError::NoCondorcetWinner { .. }) if spec.reject_without_condorcet => {
                rejections += 1;
                if rejections >= spec.max_attempts {
                    return Err(PbrlError::GenerationFailed { attempts: rejections });
                }
            }
            Err(e) => return Err(e),
        }
    }
}
