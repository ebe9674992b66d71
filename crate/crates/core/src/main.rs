//! Command-line front end: single runs, seed sweeps, diagnostics and replay.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pbrl::diagnostics::{covering_number, eluder_dimension, FiniteFunctionClass};
use pbrl::harness::{load_configs, replay, run, run_stem, sweep, write_run, ExperimentConfig};
use pbrl::Result;

/// Exit status when a run or sweep cell aborted, or a replay differed.
const EXIT_ABORTED: u8 = 2;

#[derive(Parser)]
#[command(name = "pbrl", version, about = "Preference-based RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config for its seeds (or a single given seed).
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every config for seeds 0..N in parallel.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Complexity diagnostics for a finite function class.
    Diag {
        #[command(subcommand)]
        which: Diag,
    },
    /// Re-run a stored run and compare it byte for byte.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Subcommand)]
enum Diag {
    Eluder {
        #[arg(long)]
        class: PathBuf,
        #[arg(long)]
        alpha: f64,
    },
    Cover {
        #[arg(long)]
        class: PathBuf,
        #[arg(long)]
        eps: f64,
    },
}

fn load_class(path: &Path) -> Result<FiniteFunctionClass> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn out_dir(cli: Option<PathBuf>, config: &ExperimentConfig) -> PathBuf {
    cli.or_else(|| config.harness.out.clone()).unwrap_or_else(|| PathBuf::from("runs"))
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run { config, seed, out } => {
            let configs = load_configs(&config)?;
            let indexed = configs.len() > 1;
            let mut ok = true;
            for (i, config) in configs.iter().enumerate() {
                let dir = out_dir(out.clone(), config);
                let seeds = seed.map_or_else(|| config.harness.seeds.clone(), |s| vec![s]);
                for s in seeds {
                    let log = run(config, s)?;
                    let stem = run_stem(&log.manifest.algorithm, s, indexed.then_some(i));
                    let files = write_run(&log, &dir, &stem)?;
                    let p = log.summary.exponent_p.map_or("n/a".to_string(), |p| format!("{p:.3}"));
                    println!(
                        "{stem}: K={} regret={:.4} p={p} -> {}",
                        log.summary.episodes,
                        log.summary.final_regret,
                        files.manifest.display()
                    );
                    if let Some(e) = &log.summary.aborted {
                        eprintln!("{stem} aborted: {e}");
                        ok = false;
                    }
                }
            }
            Ok(ok)
        }
        Command::Sweep { config, seeds, out } => {
            let configs = load_configs(&config)?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let outcome = sweep(&configs, &seeds, Some(&out))?;
            for (cell, row) in outcome.cells.iter().zip(&outcome.rows) {
                match &cell.aborted {
                    Some(e) => eprintln!("{} aborted: {e}", cell.stem),
                    None => println!("{}: regret={:.4}", cell.stem, row.final_regret.unwrap_or(f64::NAN)),
                }
            }
            println!("wrote {}", out.join("summary.csv").display());
            Ok(!outcome.any_aborted())
        }
        Command::Diag { which } => {
            match which {
                Diag::Eluder { class, alpha } => {
                    let d = eluder_dimension(&load_class(&class)?, alpha)?;
                    println!("{}", serde_json::json!({ "alpha": alpha, "eluder_dimension": d }));
                }
                Diag::Cover { class, eps } => {
                    let report = covering_number(&load_class(&class)?, eps)?;
                    println!("{}", serde_json::json!({ "eps": eps, "cover": report }));
                }
            }
            Ok(true)
        }
        Command::Replay { manifest } => {
            let report = replay(&manifest)?;
            if report.identical() {
                println!("replay identical: {}", manifest.display());
            } else {
                for path in &report.mismatched {
                    eprintln!("replay differs: {}", path.display());
                }
            }
            Ok(report.identical() && report.log.summary.aborted.is_none())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_ABORTED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
