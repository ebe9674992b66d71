//! Independent test oracles and shared fixtures.
//!
//! Nothing here calls the code paths it is used to check: linear systems
//! are solved by Gaussian elimination, widths are found by searching the
//! ellipsoid boundary, and trajectory laws are enumerated by a separate
//! depth-first walk.

#![allow(dead_code, clippy::needless_range_loop, clippy::too_many_arguments)]

use pbrl::environment::Instance;
use pbrl::harness::{EnvironmentSpec, ExperimentConfig, GeneratorSpec, HarnessConfig, InstanceSpec, OracleFamily,
    PoolSpec, TransitionFamily};
use pbrl::agents::{AgentConfig, Algorithm};
use pbrl::mdp::{EpisodicMdp, Kernel, MarkovPolicy, PoolMode, TransitionTable, Trajectory};
use pbrl::preference::{FeedbackModel, PreferenceModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ── Linear algebra ──────────────────────────────────────────────────────

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = ((row + 1)..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

/// `lambda I + sum x x^T` built row by row.
pub fn ridge_gram(rows: &[Vec<f64>], dim: usize, ridge: f64) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; dim]; dim];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = ridge;
    }
    for x in rows {
        for i in 0..dim {
            for j in 0..dim {
                a[i][j] += x[i] * x[j];
            }
        }
    }
    a
}

/// Ridge least squares from the normal equations.
pub fn normal_equation_fit(rows: &[(Vec<f64>, f64)], dim: usize, offset: f64, ridge: f64) -> Vec<f64> {
    let xs: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
    let a = ridge_gram(&xs, dim, ridge);
    let mut b = vec![0.0; dim];
    for (x, y) in rows {
        for i in 0..dim {
            b[i] += x[i] * (y - offset);
        }
    }
    gauss_solve(a, b)
}

/// `x^T A^{-1} x` through a linear solve.
pub fn inverse_quadratic(a: &[Vec<f64>], x: &[f64]) -> f64 {
    let z = gauss_solve(a.to_vec(), x.to_vec());
    x.iter().zip(&z).map(|(p, q)| p * q).sum()
}

fn quad(a: &[Vec<f64>], v: &[f64]) -> f64 {
    (0..v.len())
        .map(|i| (0..v.len()).map(|j| v[i] * a[i][j] * v[j]).sum::<f64>())
        .sum()
}

/// Raw width `max over theta1, theta2 in E of (theta1 - theta2)^T x` for
/// `E = {theta : (theta - c)^T A (theta - c) <= beta}`, found by searching
/// boundary points `c + sqrt(beta) v / sqrt(v^T A v)` without inverting `A`.
pub fn boundary_search_width(a: &[Vec<f64>], beta: f64, x: &[f64], seed: u64) -> f64 {
    let d = x.len();
    let support = |v: &[f64]| -> f64 {
        let q = quad(a, v);
        if q <= 0.0 {
            return f64::NEG_INFINITY;
        }
        beta.sqrt() * v.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() / q.sqrt()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Vec<f64> = x.to_vec();
    let mut best_val = support(&best);
    for _ in 0..2000 {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let val = support(&v);
        if val > best_val {
            best_val = val;
            best = v;
        }
    }
    // Pattern search on the direction.
    let mut step = 0.5;
    while step > 1e-12 {
        let mut improved = false;
        for i in 0..d {
            for sign in [1.0, -1.0] {
                let scale = best.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
                let mut v = best.clone();
                v[i] += sign * step * scale;
                let val = support(&v);
                if val > best_val {
                    best_val = val;
                    best = v;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    // The two extreme points are c +/- the maximiser.
    2.0 * best_val.max(0.0)
}

/// Exhaustive scan of `{0,1}^S` for the target value at `(s, a)`:
/// `x_V = sum_s' psi(s,a,s') V(s')`. Ties go to the lowest mask.
pub fn vertex_scan(a: &[Vec<f64>], beta: f64, psi_rows: &[Vec<f64>]) -> (u64, f64) {
    let n = psi_rows.len();
    let d = psi_rows[0].len();
    let mut best = (0u64, -1.0);
    for mask in 0..(1u64 << n) {
        let mut x = vec![0.0; d];
        for (s, row) in psi_rows.iter().enumerate() {
            if mask & (1 << s) != 0 {
                for k in 0..d {
                    x[k] += row[k];
                }
            }
        }
        let raw = 2.0 * beta.sqrt() * inverse_quadratic(a, &x).max(0.0).sqrt();
        if raw > best.1 + 1e-12 {
            best = (mask, raw);
        }
    }
    best
}

// ── Trajectory laws ─────────────────────────────────────────────────────

/// Law of the trajectory `(s_1,a_1,..,s_H,a_H)` by depth-first enumeration.
pub fn enumerate_law(
    table: &TransitionTable,
    horizon: usize,
    s1: usize,
    policy: &MarkovPolicy,
) -> Vec<(Trajectory, f64)> {
    fn walk(
        table: &TransitionTable,
        horizon: usize,
        policy: &MarkovPolicy,
        h: usize,
        s: usize,
        prefix: &mut Vec<(usize, usize)>,
        p: f64,
        out: &mut Vec<(Trajectory, f64)>,
    ) {
        for a in 0..table.num_actions() {
            let pa = policy.action_prob(h, s, a);
            if pa == 0.0 {
                continue;
            }
            prefix.push((s, a));
            if h + 1 == horizon {
                out.push((Trajectory::new(prefix.clone()), p * pa));
            } else {
                for next in 0..table.num_states() {
                    let pn = table.prob(s, a, next);
                    if pn > 0.0 {
                        walk(table, horizon, policy, h + 1, next, prefix, p * pa * pn, out);
                    }
                }
            }
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    walk(table, horizon, policy, 0, s1, &mut Vec::new(), 1.0, &mut out);
    // Merge repeated trajectories.
    out.sort_by(|a, b| a.0.steps.cmp(&b.0.steps));
    let mut merged: Vec<(Trajectory, f64)> = Vec::new();
    for (t, p) in out {
        match merged.last_mut() {
            Some((last, q)) if last.steps == t.steps => *q += p,
            _ => merged.push((t, p)),
        }
    }
    merged
}

pub fn pair_expectation(
    l1: &[(Trajectory, f64)],
    l2: &[(Trajectory, f64)],
    f: impl Fn(&Trajectory, &Trajectory) -> f64,
) -> f64 {
    let mut total = 0.0;
    for (t1, p1) in l1 {
        for (t2, p2) in l2 {
            total += p1 * p2 * f(t1, t2);
        }
    }
    total
}

// ── Fixtures ────────────────────────────────────────────────────────────

/// Generator seed of the fixed reference environment.
pub const REFERENCE_ENV_SEED: u64 = 2024;

/// Three states, two actions, horizon two, a two-component linear-mixture
/// kernel and a sampled 16-policy pool.
pub fn reference_generator(oracle: OracleFamily) -> GeneratorSpec {
    GeneratorSpec {
        num_states: 3,
        num_actions: 2,
        horizon: 2,
        transitions: TransitionFamily::LinearMixture { dim: 2 },
        oracle,
        pool_mode: PoolMode::Sampled,
        pool_cap: 16,
        seed: Some(REFERENCE_ENV_SEED),
        reject_without_condorcet: true,
        max_attempts: 100,
    }
}

/// Deterministic two-step lock on one-dimensional linear-mixture features.
/// Action 1 at the start leads to state 2, which pays off under action 1;
/// every other path is worth less. Policies that always play action 0 learn
/// nothing from self-comparisons.
pub fn lock_mdp() -> EpisodicMdp {
    let p = [
        vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        vec![vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]],
        vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]],
    ];
    let psi = p
        .iter()
        .map(|rows| rows.iter().map(|row| row.iter().map(|v| vec![*v]).collect()).collect())
        .collect();
    EpisodicMdp::new(
        3,
        2,
        2,
        0,
        Kernel::LinearMixture {
            psi,
            theta: vec![1.0],
            bound: 1.0,
        },
    )
    .unwrap()
}

pub fn lock_rewards() -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.5], vec![0.0, 0.0], vec![0.0, 0.5]]
}

pub fn trap_instance() -> InstanceSpec {
    InstanceSpec {
        instance: Instance {
            mdp: lock_mdp(),
            oracle: pbrl::environment::Oracle::Preference(PreferenceModel::utility(lock_rewards())),
        },
        pool: PoolSpec {
            mode: PoolMode::Exhaustive,
            cap: 64,
            seed: 0,
        },
        trajectory_cap: pbrl::mdp::DEFAULT_TRAJECTORY_CAP,
    }
}

pub fn trap_feedback_instance() -> InstanceSpec {
    let mut spec = trap_instance();
    spec.instance.oracle = pbrl::environment::Oracle::Feedback(FeedbackModel::utility_sum(lock_rewards()));
    spec
}

pub fn experiment(environment: EnvironmentSpec, algorithm: Algorithm, episodes: usize, c_beta: f64) -> ExperimentConfig {
    let mut agent = AgentConfig::new(algorithm);
    agent.c_beta = c_beta;
    agent.dump_estimator = false;
    let mut harness = HarnessConfig::new(episodes);
    harness.write_records = false;
    ExperimentConfig {
        environment,
        agent,
        harness,
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
