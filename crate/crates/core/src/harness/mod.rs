//! Experiment harness: configs, environment generation, runs, sweeps,
//! summaries and replay.

pub mod config;
pub mod generate;
pub mod run;
pub mod summary;

pub use config::{load_configs, EmitOptions, EnvironmentSpec, ExperimentConfig, HarnessConfig, InstanceSpec, PoolSpec};
pub use generate::{generate_environment, GenerationReport, GeneratorSpec, OracleFamily, TransitionFamily};
pub use run::{
    read_manifest, replay, run, run_stem, sweep, write_run, Manifest, ReplayReport, RunFiles, RunLog, SummaryRow,
    SweepOutcome,
};
pub use summary::{growth_exponent, Summary};
