//! Preference-based reinforcement learning with linear function approximation.
//!
//! The crate provides episodic MDPs with tabular or linear-mixture kernels,
//! trajectory-level preference and feedback oracles, ridge-regression
//! confidence sets, optimistic planners over finite policy pools, the
//! learning agents and baselines, brute-force complexity diagnostics, and an
//! experiment harness with a command-line front end.

// `!(x > 0.0)` checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod agents;
pub mod diagnostics;
pub mod environment;
pub mod estimator;
pub mod harness;
pub mod mdp;
pub mod planner;
pub mod preference;

pub use error::{PbrlError, Result};
