//! Run summaries computed from episode records.

use serde::{Deserialize, Serialize};

use crate::agents::EpisodeRecord;

/// Slope of `ln y` against `ln k` by least squares over the tail half
/// `k >= ceil(K/2)` of a cumulative curve `y_1..y_K`. Points with `y <= 0`
/// are skipped; `None` when fewer than two points remain.
pub fn growth_exponent(curve: &[f64]) -> Option<f64> {
    let k = curve.len();
    let start = k.div_ceil(2).max(1);
    let points: Vec<(f64, f64)> = (start..=k)
        .filter(|&i| curve[i - 1] > 0.0)
        .map(|i| ((i as f64).ln(), curve[i - 1].ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn cumulative(values: impl Iterator<Item = f64>) -> Vec<f64> {
    values
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

fn rate(flags: impl Iterator<Item = Option<bool>>) -> Option<f64> {
    let (hits, total) = flags.flatten().fold((0usize, 0usize), |(h, t), f| (h + f as usize, t + 1));
    (total > 0).then(|| hits as f64 / total as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    /// `R(k)` for `k = 1..K`.
    pub cumulative_regret: Vec<f64>,
    pub final_regret: f64,
    /// Fitted exponent `p` in `R(k) ~ k^p`.
    pub exponent_p: Option<f64>,
    pub exponent_comparison_bonus: Option<f64>,
    pub exponent_transition_bonus: Option<f64>,
    /// Final value regret of the outer problem, for the reduction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_outer_regret: Option<f64>,
    /// Fraction of episodes with the benchmark policy inside the set.
    pub pistar_rate: Option<f64>,
    /// Fraction of episodes whose true parameters passed the coverage test.
    pub coverage_rate: Option<f64>,
    pub approximate_episodes: usize,
    /// Error that stopped the run early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

impl Summary {
    pub fn from_records(records: &[EpisodeRecord], aborted: Option<String>) -> Self {
        let curve = cumulative(records.iter().map(|r| r.regret));
        let comparison = cumulative(records.iter().map(|r| r.bonus.comparison));
        let transition = cumulative(records.iter().map(|r| r.bonus.transition));
        let outer: Option<f64> = records
            .iter()
            .map(|r| r.outer_regret)
            .sum::<Option<f64>>()
            .filter(|_| !records.is_empty());
        Self {
            episodes: records.len(),
            final_regret: curve.last().copied().unwrap_or(0.0),
            exponent_p: growth_exponent(&curve),
            exponent_comparison_bonus: growth_exponent(&comparison),
            exponent_transition_bonus: growth_exponent(&transition),
            cumulative_regret: curve,
            final_outer_regret: outer,
            pistar_rate: rate(records.iter().map(|r| r.pistar_in_set)),
            coverage_rate: rate(records.iter().map(|r| r.coverage.joint())),
            approximate_episodes: records.iter().filter(|r| r.approximate).count(),
            aborted,
        }
    }
}
