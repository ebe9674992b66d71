//! Single runs, parallel sweeps and replay.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{build_agent, BetaValues, EpisodeRecord};
use crate::error::{PbrlError, Result};
use crate::mdp::PoolDescriptor;

use super::config::ExperimentConfig;
use super::generate::GenerationReport;
use super::summary::Summary;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable bounding the sweep thread count.
pub const THREADS_VAR: &str = "PBRL_THREADS";

const POLICY_CLASS_NOTE: &str = "policy class restricted to a finite pool of deterministic Markov policies; \
     regret and the benchmark policy are relative to this pool";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    /// Resolved config with `seeds` narrowed to this run.
    pub config: ExperimentConfig,
    pub algorithm: String,
    pub betas: BetaValues,
    pub pool: PoolDescriptor,
    pub pool_size: usize,
    pub pistar: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationReport>,
    pub policy_class: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub manifest: Manifest,
    pub records: Vec<EpisodeRecord>,
    pub summary: Summary,
}

/// Runs `config` with run seed `seed`.
///
/// Setup failures (bad config, generation failure) are returned as errors.
/// An error inside the episode loop stops the run and is reported in
/// `summary.aborted`, keeping the records played so far.
pub fn run(config: &ExperimentConfig, seed: u64) -> Result<RunLog> {
    config.validate()?;
    let (env, generation) = config.environment.build(seed)?;
    let k = config.harness.episodes;
    let mut agent = build_agent(&config.agent, &env, k, seed)?;
    let mut resolved = config.clone();
    resolved.harness.seeds = vec![seed];
    let manifest = Manifest {
        version: VERSION.to_string(),
        seed,
        config: resolved,
        algorithm: config.agent.algorithm.name(),
        betas: agent.betas(),
        pool: env.pool.descriptor.clone(),
        pool_size: env.pool.len(),
        pistar: env.pistar,
        generation,
        policy_class: POLICY_CLASS_NOTE.to_string(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(k);
    let mut aborted = None;
    for episode in 1..=k {
        let start = Instant::now();
        match agent.episode(&env, episode, &mut rng) {
            Ok(mut record) => {
                if config.harness.emit.wall_time {
                    record.wall_time_ms = Some(start.elapsed().as_secs_f64() * 1e3);
                }
                records.push(record);
            }
            Err(e) => {
                aborted = Some(format!("episode {episode}: {e}"));
                break;
            }
        }
    }
    let summary = Summary::from_records(&records, aborted);
    Ok(RunLog {
        manifest,
        records,
        summary,
    })
}

/// File names written for one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunFiles {
    pub manifest: PathBuf,
    pub records: PathBuf,
    pub summary: PathBuf,
}

impl RunFiles {
    pub fn new(dir: &Path, stem: &str) -> Self {
        Self {
            manifest: dir.join(format!("{stem}.manifest.json")),
            records: dir.join(format!("{stem}.jsonl")),
            summary: dir.join(format!("{stem}.summary.json")),
        }
    }

    /// Sibling files of a manifest path.
    pub fn from_manifest(path: &Path) -> Result<Self> {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix(".manifest.json"))
            .ok_or_else(|| PbrlError::InvalidArgument(format!("{} is not a manifest file", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Ok(Self::new(dir, name))
    }
}

pub fn run_stem(algorithm: &str, seed: u64, config_index: Option<usize>) -> String {
    match config_index {
        Some(i) => format!("c{i}_{algorithm}_seed{seed}"),
        None => format!("{algorithm}_seed{seed}"),
    }
}

fn manifest_bytes(log: &RunLog) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(&log.manifest)?;
    out.push(b'\n');
    Ok(out)
}

fn records_bytes(log: &RunLog) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in &log.records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn summary_bytes(log: &RunLog) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(&log.summary)?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_run(log: &RunLog, dir: &Path, stem: &str) -> Result<RunFiles> {
    fs::create_dir_all(dir)?;
    let files = RunFiles::new(dir, stem);
    fs::write(&files.manifest, manifest_bytes(log)?)?;
    if log.manifest.config.harness.write_records {
        fs::write(&files.records, records_bytes(log)?)?;
    }
    fs::write(&files.summary, summary_bytes(log)?)?;
    Ok(files)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayReport {
    pub log: RunLog,
    /// Files whose stored bytes differ from the replay (missing files count
    /// as differing).
    pub mismatched: Vec<PathBuf>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Re-executes the run described by a manifest and compares the output with
/// the files stored next to it.
pub fn replay(manifest_path: &Path) -> Result<ReplayReport> {
    let manifest = read_manifest(manifest_path)?;
    let log = run(&manifest.config, manifest.seed)?;
    let files = RunFiles::from_manifest(manifest_path)?;
    let mut checks = vec![
        (files.manifest, manifest_bytes(&log)?),
        (files.summary, summary_bytes(&log)?),
    ];
    if manifest.config.harness.write_records {
        checks.push((files.records, records_bytes(&log)?));
    }
    let mismatched = checks
        .into_iter()
        .filter(|(path, bytes)| fs::read(path).map_or(true, |stored| &stored != bytes))
        .map(|(path, _)| path)
        .collect();
    Ok(ReplayReport { log, mismatched })
}

// ── Sweeps ──────────────────────────────────────────────────────────────

/// One line of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algo: String,
    pub seed: u64,
    #[serde(rename = "K")]
    pub episodes: usize,
    pub n: usize,
    pub c_beta: f64,
    pub final_regret: Option<f64>,
    pub exponent_p: Option<f64>,
    pub pistar_rate: Option<f64>,
    pub coverage_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub config_index: usize,
    pub seed: u64,
    pub stem: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub version: String,
    pub configs: Vec<ExperimentConfig>,
    pub cells: Vec<CellEntry>,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SummaryRow>,
    pub cells: Vec<CellEntry>,
    /// Completed runs in cell order; `None` for cells that failed during setup.
    pub logs: Vec<Option<RunLog>>,
}

impl SweepOutcome {
    pub fn any_aborted(&self) -> bool {
        self.cells.iter().any(|c| c.aborted.is_some())
    }
}

/// Thread count from `PBRL_THREADS`, if set to a positive integer.
pub fn thread_limit() -> Option<usize> {
    std::env::var(THREADS_VAR).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs every (config, seed) cell in parallel. A failing cell is recorded and
/// the others proceed. With `out` set, each run is written there along with
/// `manifest.json` and `summary.csv`.
pub fn sweep(configs: &[ExperimentConfig], seeds: &[u64], out: Option<&Path>) -> Result<SweepOutcome> {
    let cells: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let indexed = configs.len() > 1;
    let execute = || -> Vec<(Option<RunLog>, CellEntry, SummaryRow)> {
        cells
            .par_iter()
            .map(|&(c, seed)| {
                let config = &configs[c];
                let algo = config.agent.algorithm.name();
                let stem = run_stem(&algo, seed, indexed.then_some(c));
                let mut row = SummaryRow {
                    algo,
                    seed,
                    episodes: config.harness.episodes,
                    n: config.agent.algorithm.comparisons(),
                    c_beta: config.agent.c_beta,
                    final_regret: None,
                    exponent_p: None,
                    pistar_rate: None,
                    coverage_rate: None,
                };
                let mut entry = CellEntry {
                    config_index: c,
                    seed,
                    stem: stem.clone(),
                    aborted: None,
                };
                let result = run(config, seed).and_then(|log| {
                    if let Some(dir) = out {
                        write_run(&log, dir, &stem)?;
                    }
                    Ok(log)
                });
                match result {
                    Ok(log) => {
                        row.final_regret = Some(log.summary.final_regret);
                        row.exponent_p = log.summary.exponent_p;
                        row.pistar_rate = log.summary.pistar_rate;
                        row.coverage_rate = log.summary.coverage_rate;
                        entry.aborted = log.summary.aborted.clone();
                        (Some(log), entry, row)
                    }
                    Err(e) => {
                        entry.aborted = Some(e.to_string());
                        (None, entry, row)
                    }
                }
            })
            .collect()
    };
    let results = match thread_limit() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| PbrlError::InvalidArgument(format!("thread pool: {e}")))?
            .install(execute),
        None => execute(),
    };

    let mut outcome = SweepOutcome {
        rows: Vec::new(),
        cells: Vec::new(),
        logs: Vec::new(),
    };
    for (log, entry, row) in results {
        outcome.logs.push(log);
        outcome.cells.push(entry);
        outcome.rows.push(row);
    }

    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        for cell in outcome.cells.iter().filter(|c| c.aborted.is_some()) {
            let path = dir.join(format!("{}.error.json", cell.stem));
            fs::write(path, serde_json::to_vec_pretty(cell)?)?;
        }
        let manifest = SweepManifest {
            version: VERSION.to_string(),
            configs: configs.to_vec(),
            cells: outcome.cells.clone(),
        };
        fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        let file = fs::File::create(dir.join("summary.csv"))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        for row in &outcome.rows {
            writer.serialize(row)?;
        }
        writer.flush()?;
        writer.into_inner().map_err(|e| e.into_error())?.flush()?;
    }
    Ok(outcome)
}
