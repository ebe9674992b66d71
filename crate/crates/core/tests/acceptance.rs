//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

mod common;

use std::time::Instant;

use common::{
    boundary_search_width, experiment, lock_mdp, mean, normal_equation_fit, reference_generator, trap_instance,
    vertex_scan,
};
use nalgebra::DMatrix;
use pbrl::agents::{reduce_feedback, Algorithm};
use pbrl::diagnostics::{covering_number, eluder_dimension, FiniteFunctionClass};
use pbrl::environment::{Environment, Instance, Oracle};
use pbrl::estimator::{fit_least_squares, select_target_value, ConfidenceEllipsoid, RegressionLog, Stream, VertexSearch};
use pbrl::harness::{
    replay, run, sweep, write_run, EnvironmentSpec, ExperimentConfig, GeneratorSpec, OracleFamily, TransitionFamily,
};
use pbrl::mdp::{enumerate_policy_pool, PoolMode, TransitionFeatures, Trajectory, DEFAULT_TRAJECTORY_CAP};
use pbrl::preference::FeedbackModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gram_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn random_log(rng: &mut ChaCha8Rng, dim: usize, rows: usize, offset: f64) -> (RegressionLog, Vec<(Vec<f64>, f64)>) {
    let mut log = RegressionLog::new(Stream::Preference, dim, offset);
    let mut raw = Vec::with_capacity(rows);
    for t in 0..rows {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        log.push(t + 1, x.clone(), y).unwrap();
        raw.push((x, y));
    }
    (log, raw)
}

// ── 1 ───────────────────────────────────────────────────────────────────

fn regression_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let dim = rng.gen_range(1..=8);
        let rows = rng.gen_range(0..=10_000);
        let (log, raw) = random_log(&mut rng, dim, rows, 0.5);
        let fit = fit_least_squares(&log, 1.0).unwrap();
        let oracle = normal_equation_fit(&raw, dim, 0.5, 1.0);
        for (a, b) in fit.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 10.0,
        format!("50 logs, max |diff| = {worst:.2e}, {secs:.2} s"),
    )
}

// ── 2 ───────────────────────────────────────────────────────────────────

fn bonus_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2000);
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let dim = rng.gen_range(1..=6);
        let rows = rng.gen_range(0..200);
        let (log, _) = random_log(&mut rng, dim, rows, 0.5);
        let beta = rng.gen_range(0.001..2.0);
        let ell = ConfidenceEllipsoid::fit(&log, 1.0, beta).unwrap();
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let oracle = boundary_search_width(&gram_rows(ell.gram()), beta, &x, case);
        worst = worst.max((ell.raw_width(&x) - oracle).abs());
    }

    let mut mismatches = 0;
    let mut checked = 0;
    for ns in 1..=8 {
        for _ in 0..3 {
            let dim = rng.gen_range(1..=4);
            let psi: Vec<f64> = (0..ns * 2 * ns * dim).map(|_| rng.gen_range(-0.5..1.0)).collect();
            let features = TransitionFeatures::new(ns, 2, dim, psi).unwrap();
            let rows = rng.gen_range(0..30);
            let (log, _) = random_log(&mut rng, dim, rows, 0.0);
            let beta = rng.gen_range(0.01..2.0);
            let ell = ConfidenceEllipsoid::fit(&log, 1.0, beta).unwrap();
            let gram = gram_rows(ell.gram());
            for s in 0..ns {
                for a in 0..2 {
                    let psi_rows: Vec<Vec<f64>> = (0..ns).map(|n| features.psi_at(s, a, n).to_vec()).collect();
                    let (mask, raw) = vertex_scan(&gram, beta, &psi_rows);
                    let got = select_target_value(&ell, &features, s, a, VertexSearch::Exact).unwrap();
                    checked += 1;
                    if got.mask != mask || (got.raw - raw).abs() > 1e-9 {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-3 && mismatches == 0 && secs < 30.0,
        format!(
            "100 width cases, max |diff| = {worst:.2e}; vertex scan {mismatches}/{checked} mismatches; {secs:.2} s"
        ),
    )
}

// ── 3, 4 ────────────────────────────────────────────────────────────────

fn coverage_experiment() -> (Outcome, Outcome) {
    let start = Instant::now();
    let spec = GeneratorSpec {
        num_states: 3,
        num_actions: 2,
        horizon: 3,
        transitions: TransitionFamily::LinearMixture { dim: 2 },
        oracle: OracleFamily::LinearPreference { dim: 2 },
        pool_mode: PoolMode::Sampled,
        pool_cap: 16,
        seed: None,
        reject_without_condorcet: true,
        max_attempts: 100,
    };
    let mut config = experiment(EnvironmentSpec::Generator(spec), Algorithm::Pbop, 300, 1.0);
    config.agent.delta = 0.05;
    let seeds: Vec<u64> = (0..200).collect();
    let result = sweep(&[config], &seeds, None).unwrap();
    let records: Vec<_> = result.logs.iter().flatten().flat_map(|l| &l.records).collect();
    let total = records.len();
    let covered = records.iter().filter(|r| r.coverage.joint() == Some(true)).count();
    let member = records.iter().filter(|r| r.pistar_in_set == Some(true)).count();
    let complete = !result.any_aborted() && total == 200 * 300;
    let secs = start.elapsed().as_secs_f64();
    let cov = covered as f64 / total.max(1) as f64;
    let mem = member as f64 / total.max(1) as f64;
    (
        outcome(
            complete && cov >= 0.95,
            format!("coverage {cov:.4} over {total} (run, episode) pairs, {secs:.1} s"),
        ),
        outcome(complete && mem >= 0.95, format!("membership {mem:.4} over {total} pairs")),
    )
}

// ── 5, 6, 9 ─────────────────────────────────────────────────────────────

struct SweepStats {
    p: f64,
    regret: f64,
    comparison_exp: f64,
    transition_exp: f64,
}

fn sweep_stats(config: ExperimentConfig, seeds: usize) -> SweepStats {
    let seeds: Vec<u64> = (0..seeds as u64).collect();
    let result = sweep(&[config], &seeds, None).unwrap();
    assert!(!result.any_aborted(), "sweep cell aborted");
    let summaries: Vec<_> = result.logs.iter().flatten().map(|l| &l.summary).collect();
    let collect = |f: &dyn Fn(&pbrl::harness::Summary) -> Option<f64>| {
        mean(&summaries.iter().map(|s| f(s).unwrap_or(f64::NAN)).collect::<Vec<_>>())
    };
    SweepStats {
        p: collect(&|s| s.exponent_p),
        regret: collect(&|s| Some(s.final_regret)),
        comparison_exp: collect(&|s| s.exponent_comparison_bonus),
        transition_exp: collect(&|s| s.exponent_transition_bonus),
    }
}

fn sublinear(stats: &SweepStats, baseline: &SweepStats) -> (bool, f64) {
    let ratio = stats.regret / baseline.regret;
    (stats.p < 0.8 && ratio < 0.6, ratio)
}

fn preference_sweep() -> (Outcome, Outcome) {
    let start = Instant::now();
    let env = || EnvironmentSpec::Generator(reference_generator(OracleFamily::LinearPreference { dim: 2 }));
    let pbop = sweep_stats(experiment(env(), Algorithm::Pbop, 2000, 0.1), 20);
    let uniform = sweep_stats(experiment(env(), Algorithm::UniformRandom, 2000, 0.1), 20);
    let (ok, ratio) = sublinear(&pbop, &uniform);

    let trap = || EnvironmentSpec::Instance(trap_instance());
    let greedy = sweep_stats(experiment(trap(), Algorithm::GreedyNoBonus, 2000, 0.1), 20);
    let trap_uniform = sweep_stats(experiment(trap(), Algorithm::UniformRandom, 2000, 0.1), 20);
    let (greedy_ok, greedy_ratio) = sublinear(&greedy, &trap_uniform);
    let secs = start.elapsed().as_secs_f64();

    (
        outcome(
            ok && !greedy_ok,
            format!(
                "pbop mean p = {:.3}, regret {:.1} vs uniform {:.1} (ratio {ratio:.3}); \
                 greedy on trap p = {:.3}, ratio {greedy_ratio:.3}; {secs:.1} s",
                pbop.p, pbop.regret, uniform.regret, greedy.p
            ),
        ),
        outcome(
            pbop.comparison_exp < 0.8 && pbop.transition_exp < 0.8,
            format!(
                "comparison-bonus exponent {:.3}, transition-bonus exponent {:.3}",
                pbop.comparison_exp, pbop.transition_exp
            ),
        ),
    )
}

fn feedback_sweep() -> Outcome {
    let start = Instant::now();
    let env = || EnvironmentSpec::Generator(reference_generator(OracleFamily::LinearFeedback { dim: 2 }));
    let agent = sweep_stats(experiment(env(), Algorithm::OncePerEpisode, 2000, 0.1), 20);
    let uniform = sweep_stats(experiment(env(), Algorithm::UniformRandom, 2000, 0.1), 20);
    let (ok, ratio) = sublinear(&agent, &uniform);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        ok,
        format!(
            "once-per-episode mean p = {:.3}, regret {:.2} vs uniform {:.2} (ratio {ratio:.3}); {secs:.1} s",
            agent.p, agent.regret, uniform.regret
        ),
    )
}

// ── 7 ───────────────────────────────────────────────────────────────────

fn pairwise_equivalence() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let env = || EnvironmentSpec::Generator(reference_generator(OracleFamily::LinearPreference { dim: 2 }));
    let mut streams = Vec::new();
    for algorithm in [Algorithm::Pbop, Algorithm::PbopPlus { n: 2 }] {
        let mut config = experiment(env(), algorithm, 200, 0.1);
        config.agent.beta_override.preference = Some(0.5);
        config.agent.beta_override.transition = Some(0.5);
        config.harness.write_records = true;
        let log = run(&config, 11).unwrap();
        let files = write_run(&log, dir.path(), &log.manifest.algorithm).unwrap();
        streams.push(std::fs::read(files.records).unwrap());
    }
    let lines = streams[0].iter().filter(|&&b| b == b'\n').count();
    outcome(
        streams[0] == streams[1] && lines == 200,
        format!("{lines} records, {} vs {} bytes", streams[0].len(), streams[1].len()),
    )
}

// ── 8 ───────────────────────────────────────────────────────────────────

/// Lock environment whose two paths carry feedback probabilities `p1`, `p2`.
fn two_path_feedback(p1: f64, p2: f64) -> (Environment, Trajectory, Trajectory) {
    let r = vec![vec![p1 / 2.0, p2 / 2.0], vec![p1 / 2.0; 2], vec![p2 / 2.0; 2]];
    let mdp = lock_mdp();
    let pool = enumerate_policy_pool(3, 2, 2, PoolMode::Exhaustive, 64, 0).unwrap();
    let instance = Instance {
        mdp,
        oracle: Oracle::Feedback(FeedbackModel::utility_sum(r)),
    };
    let env = Environment::from_instance(instance, pool, DEFAULT_TRAJECTORY_CAP).unwrap();
    (
        env,
        Trajectory::new(vec![(0, 0), (1, 0)]),
        Trajectory::new(vec![(0, 1), (2, 0)]),
    )
}

fn reduction_semantics() -> Outcome {
    const DRAWS: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ok = true;
    let mut parts = Vec::new();
    for (p1, p2) in [(0.9, 0.3), (0.2, 0.7), (0.6, 0.6), (1.0, 1.0)] {
        let (env, t1, t2) = two_path_feedback(p1, p2);
        let mut ones = 0usize;
        for _ in 0..DRAWS {
            let y1 = env.feedback(&t1, &mut rng).unwrap();
            let y2 = env.feedback(&t2, &mut rng).unwrap();
            ones += usize::from(reduce_feedback(y1, y2, &mut rng));
        }
        let target = (p1 - p2 + 1.0) / 2.0;
        let freq = ones as f64 / DRAWS as f64;
        let se = (target * (1.0 - target) / DRAWS as f64).sqrt();
        let z = (freq - target).abs() / se;
        ok &= z <= 3.0;
        parts.push(format!("({p1},{p2}): {freq:.4} vs {target:.3}, {z:.2} SE"));
    }
    outcome(ok, parts.join("; "))
}

// ── 10 ──────────────────────────────────────────────────────────────────

/// Longest sequence of distinct points, each independent of its
/// predecessors for a common scale `a >= alpha`, found by trying every
/// ordered subset against every candidate scale.
fn brute_eluder(functions: &[Vec<f64>], alpha: f64) -> usize {
    let n = functions[0].len();
    let mut scales = vec![alpha];
    for f in functions {
        for g in functions {
            for mask in 0..(1usize << n) {
                let s: f64 = (0..n).filter(|x| mask & (1 << x) != 0).map(|x| (f[x] - g[x]).powi(2)).sum();
                if s.sqrt() >= alpha {
                    scales.push(s.sqrt());
                }
            }
        }
    }
    fn extend(functions: &[Vec<f64>], a: f64, seq: &mut Vec<usize>, n: usize) -> usize {
        let mut best = seq.len();
        for x in 0..n {
            if seq.contains(&x) {
                continue;
            }
            let independent = functions.iter().any(|f| {
                functions.iter().any(|g| {
                    let s: f64 = seq.iter().map(|&p| (f[p] - g[p]).powi(2)).sum();
                    s <= a * a && f[x] - g[x] >= a
                })
            });
            if independent {
                seq.push(x);
                best = best.max(extend(functions, a, seq, n));
                seq.pop();
            }
        }
        best
    }
    scales
        .into_iter()
        .map(|a| extend(functions, a, &mut Vec::new(), n))
        .max()
        .unwrap()
}

/// Smallest set of class members whose sup-norm balls cover the class.
fn brute_cover(functions: &[Vec<f64>], eps: f64) -> usize {
    let n = functions.len();
    let close = |i: usize, j: usize| {
        functions[i]
            .iter()
            .zip(&functions[j])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            <= eps
    };
    let mut best = n;
    for mask in 1u32..(1 << n) {
        let size = mask.count_ones() as usize;
        if size >= best {
            continue;
        }
        if (0..n).all(|f| (0..n).any(|c| mask & (1 << c) != 0 && close(c, f))) {
            best = size;
        }
    }
    best
}

fn boolean_class(points: usize) -> Vec<Vec<f64>> {
    (0..1usize << points)
        .map(|m| (0..points).map(|x| ((m >> x) & 1) as f64).collect())
        .collect()
}

fn seeded_class(seed: u64, size: usize, domain: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|_| (0..domain).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect()
}

fn diagnostics() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();

    let eluder_cases: Vec<(&str, Vec<Vec<f64>>, usize)> = vec![
        ("singleton", vec![vec![0.3, 0.7, 0.1]], 0),
        ("singleton |X|=1", vec![vec![1.0]], 0),
        ("boolean |X|=3", boolean_class(3), 3),
    ];
    for (name, functions, expected) in eluder_cases {
        let got = eluder_dimension(&FiniteFunctionClass::new(functions.clone()).unwrap(), 0.5).unwrap();
        let brute = brute_eluder(&functions, 0.5);
        ok &= got == expected && brute == expected;
        parts.push(format!("eluder {name} = {got} (brute {brute})"));
    }

    let cover_cases: Vec<(&str, Vec<Vec<f64>>, f64)> = vec![
        ("singleton", vec![vec![0.5, 0.5]], 0.1),
        ("boolean |X|=3", boolean_class(3), 0.5),
        ("boolean |X|=4", boolean_class(4), 1.0),
        ("seeded 12", seeded_class(12, 12, 3), 0.1),
        ("seeded 12 coarse", seeded_class(12, 12, 3), 0.4),
        ("seeded 16", seeded_class(16, 16, 2), 0.25),
        ("seeded 20", seeded_class(20, 20, 4), 0.3),
        ("seeded 20 fine", seeded_class(21, 20, 2), 0.15),
    ];
    let mut mismatched = Vec::new();
    for (name, functions, eps) in &cover_cases {
        let report = covering_number(&FiniteFunctionClass::new(functions.clone()).unwrap(), *eps).unwrap();
        let brute = brute_cover(functions, *eps);
        if report.greedy != brute || report.minimum != Some(brute) {
            ok = false;
            mismatched.push(format!("{name}: greedy {} vs minimum {brute}", report.greedy));
        }
    }
    if mismatched.is_empty() {
        parts.push(format!("cover greedy = exhaustive minimum on {} fixtures", cover_cases.len()));
    } else {
        parts.push(format!("cover mismatches: {}", mismatched.join(", ")));
    }
    outcome(ok, parts.join("; "))
}

// ── 11 ──────────────────────────────────────────────────────────────────

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let pref = || EnvironmentSpec::Generator(reference_generator(OracleFamily::LinearPreference { dim: 2 }));
    let fb = || EnvironmentSpec::Generator(reference_generator(OracleFamily::LinearFeedback { dim: 2 }));
    let cases = [
        (pref(), Algorithm::Pbop),
        (pref(), Algorithm::PbopPlus { n: 3 }),
        (pref(), Algorithm::GreedyNoBonus),
        (pref(), Algorithm::UniformRandom),
        (fb(), Algorithm::OncePerEpisode),
        (fb(), Algorithm::Reduction),
        (EnvironmentSpec::Instance(trap_instance()), Algorithm::Pbop),
    ];
    let mut identical = 0;
    let total = cases.len() + 1;
    let mut manifests = Vec::new();
    for (i, (env, algorithm)) in cases.into_iter().enumerate() {
        let mut config = experiment(env, algorithm, 100, 0.1);
        config.harness.write_records = true;
        config.agent.dump_estimator = i % 2 == 0;
        let log = run(&config, 40 + i as u64).unwrap();
        let files = write_run(&log, dir.path(), &format!("run{i}")).unwrap();
        if replay(&files.manifest).unwrap().identical() {
            identical += 1;
        }
        manifests.push(files.manifest);
    }
    let cli = std::process::Command::new(env!("CARGO_BIN_EXE_pbrl"))
        .args(["replay", "--manifest", manifests[0].to_str().unwrap()])
        .output()
        .unwrap();
    if cli.status.success() {
        identical += 1;
    }
    outcome(identical == total, format!("{identical}/{total} replays byte-identical"))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "regression matches normal equations", regression_oracle()));
    results.push((2, "widths and target values match oracles", bonus_oracles()));
    let (c3, c4) = coverage_experiment();
    results.push((3, "confidence-set coverage", c3));
    results.push((4, "benchmark policy stays in the policy set", c4));
    let (c5, c6) = preference_sweep();
    results.push((5, "sublinear preference regret", c5));
    results.push((6, "sublinear bonus sums", c6));
    results.push((7, "n = 2 tuple agent equals pairwise agent", pairwise_equivalence()));
    results.push((8, "feedback-to-preference reduction", reduction_semantics()));
    results.push((9, "sublinear once-per-episode regret", feedback_sweep()));
    results.push((10, "complexity diagnostics", diagnostics()));
    results.push((11, "byte-identical replay", determinism()));

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (id, name, o) in &results {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict}  {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
