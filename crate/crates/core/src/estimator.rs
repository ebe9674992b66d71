//! Least-squares estimation, confidence ellipsoids and exploration bonuses.
//!
//! All three learned quantities (preference function, feedback function and
//! the transition model via value-targeted regression) are linear in known
//! features, so each confidence set is an ellipsoid
//!
//! ```text
//!   A = lambda I + sum_t x_t x_t^T
//!   theta_hat = A^{-1} sum_t x_t (y_t - offset)
//!   { theta : ||theta - theta_hat||_A^2 <= beta }
//! ```
//!
//! and the width of the set along a direction `x` has the closed form
//! `2 sqrt(beta) ||x||_{A^{-1}}`. Widths are clipped to 1 where they are used
//! as bonuses, since every learned function takes values in `[0, 1]`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PbrlError, Result};
use crate::mdp::{vertex, TransitionFeatures};

/// Largest state count for which `V_max` is found by enumerating `{0,1}^S`.
pub const EXACT_VERTEX_LIMIT: usize = 12;
const HEURISTIC_RESTARTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Preference,
    Transition,
    Feedback,
}

// ── Regression logs ─────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub episode: usize,
    pub features: Vec<f64>,
    pub target: f64,
}

/// Append-only history of `(x_t, y_t)` pairs for one stream, with the
/// sufficient statistics `sum x x^T` and `sum x (y - offset)` kept up to date
/// by rank-one updates.
#[derive(Clone, Debug)]
pub struct RegressionLog {
    stream: Stream,
    dim: usize,
    offset: f64,
    rows: Vec<LogRow>,
    gram: DMatrix<f64>,
    moment: DVector<f64>,
}

impl RegressionLog {
    /// `offset` is the known intercept of the model: targets are regressed as
    /// `y - offset` (1/2 for the preference stream).
    pub fn new(stream: Stream, dim: usize, offset: f64) -> Self {
        Self {
            stream,
            dim,
            offset,
            rows: Vec::new(),
            gram: DMatrix::zeros(dim, dim),
            moment: DVector::zeros(dim),
        }
    }

    pub fn push(&mut self, episode: usize, features: Vec<f64>, target: f64) -> Result<()> {
        if features.len() != self.dim {
            return Err(PbrlError::InvalidArgument(format!(
                "feature length {} does not match log dimension {}",
                features.len(),
                self.dim
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(PbrlError::InvalidArgument("non-finite regression feature".into()));
        }
        if !(0.0..=1.0).contains(&target) {
            return Err(PbrlError::InvalidArgument(format!(
                "regression target {target} outside [0,1]"
            )));
        }
        let x = DVector::from_column_slice(&features);
        self.gram.ger(1.0, &x, &x, 1.0);
        self.moment.axpy(target - self.offset, &x, 1.0);
        self.rows.push(LogRow {
            episode,
            features,
            target,
        });
        Ok(())
    }

    pub fn stream(&self) -> Stream {
        self.stream
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    /// `sum_t x_t x_t^T` (no ridge term).
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `sum_t x_t (y_t - offset)`.
    pub fn moment(&self) -> &DVector<f64> {
        &self.moment
    }

    /// `sum_t (x_t^T delta)^2`, evaluated row by row.
    pub fn squared_error_sum(&self, delta: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let v: f64 = r.features.iter().zip(delta).map(|(a, b)| a * b).sum();
                v * v
            })
            .sum()
    }

    /// Same quantity as [`Self::squared_error_sum`] through the Gram matrix.
    pub fn squared_error_sum_gram(&self, delta: &[f64]) -> f64 {
        let d = DVector::from_column_slice(delta);
        (d.transpose() * &self.gram * &d)[(0, 0)].max(0.0)
    }
}

fn ridge_gram(log: &RegressionLog, ridge: f64) -> Result<DMatrix<f64>> {
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(PbrlError::InvalidArgument(format!(
            "ridge must be positive, got {ridge}"
        )));
    }
    let mut a = log.gram.clone();
    for i in 0..log.dim {
        a[(i, i)] += ridge;
    }
    Ok(a)
}

/// Ridge least-squares centre `theta_hat = (lambda I + X^T X)^{-1} X^T (y - offset)`.
pub fn fit_least_squares(log: &RegressionLog, ridge: f64) -> Result<DVector<f64>> {
    let a = ridge_gram(log, ridge)?;
    let chol = a.cholesky().ok_or(PbrlError::SingularGram)?;
    Ok(chol.solve(&log.moment))
}

// ── Confidence ellipsoids ───────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct ConfidenceEllipsoid {
    center: DVector<f64>,
    gram: DMatrix<f64>,
    inverse: DMatrix<f64>,
    radius: f64,
    ridge: f64,
    count: usize,
}

impl ConfidenceEllipsoid {
    pub fn fit(log: &RegressionLog, ridge: f64, radius: f64) -> Result<Self> {
        let gram = ridge_gram(log, ridge)?;
        let chol = gram.clone().cholesky().ok_or(PbrlError::SingularGram)?;
        let center = chol.solve(&log.moment);
        let inverse = chol.inverse();
        Self::assemble(center, gram, inverse, radius, ridge, log.len())
    }

    /// Builds an ellipsoid from an explicit centre and Gram matrix.
    pub fn new(center: Vec<f64>, gram: DMatrix<f64>, radius: f64, ridge: f64, count: usize) -> Result<Self> {
        let chol = gram.clone().cholesky().ok_or(PbrlError::SingularGram)?;
        let inverse = chol.inverse();
        Self::assemble(DVector::from_vec(center), gram, inverse, radius, ridge, count)
    }

    fn assemble(
        center: DVector<f64>,
        gram: DMatrix<f64>,
        mut inverse: DMatrix<f64>,
        radius: f64,
        ridge: f64,
        count: usize,
    ) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(PbrlError::InvalidArgument(format!(
                "confidence radius must be finite and nonnegative, got {radius}"
            )));
        }
        if gram.nrows() != center.len() || gram.ncols() != center.len() {
            return Err(PbrlError::InvalidArgument("Gram matrix shape mismatch".into()));
        }
        // Symmetrise the inverse so quadratic forms are exactly symmetric in x.
        let n = inverse.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (inverse[(i, j)] + inverse[(j, i)]);
                inverse[(i, j)] = m;
                inverse[(j, i)] = m;
            }
        }
        Ok(Self {
            center,
            gram,
            inverse,
            radius,
            ridge,
            count,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn with_radius(&self, radius: f64) -> Self {
        Self {
            radius,
            ..self.clone()
        }
    }

    /// `x^T A^{-1} x`.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, xi) in x.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            let row: f64 = x.iter().enumerate().map(|(j, xj)| self.inverse[(i, j)] * xj).sum();
            acc += xi * row;
        }
        acc.max(0.0)
    }

    /// Unclipped diameter of the ellipsoid along `x`: `2 sqrt(beta) ||x||_{A^{-1}}`.
    pub fn raw_width(&self, x: &[f64]) -> f64 {
        2.0 * self.radius.sqrt() * self.mahalanobis_sq(x).sqrt()
    }

    /// Bonus `min(1, raw_width(x))`.
    pub fn width(&self, x: &[f64]) -> f64 {
        self.raw_width(x).min(1.0)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        x.iter().zip(self.center.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn center_vec(&self) -> Vec<f64> {
        self.center.iter().copied().collect()
    }
}

/// Outcome of the sum-of-squares membership test for a known parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceCheck {
    pub statistic: f64,
    pub radius: f64,
    pub inside: bool,
}

/// Checks `sum_t (x_t^T (theta_hat - theta_true))^2 <= beta` on the logged
/// features. Needs ground truth, so it is an evaluation-only operation.
pub fn model_in_confidence_set(
    ell: &ConfidenceEllipsoid,
    truth: &[f64],
    log: &RegressionLog,
) -> ConfidenceCheck {
    let delta: Vec<f64> = ell.center.iter().zip(truth).map(|(a, b)| a - b).collect();
    let statistic = log.squared_error_sum(&delta);
    ConfidenceCheck {
        statistic,
        radius: ell.radius,
        inside: statistic <= ell.radius,
    }
}

/// Gram-matrix form of [`model_in_confidence_set`] for per-episode use.
pub fn model_in_confidence_set_gram(
    ell: &ConfidenceEllipsoid,
    truth: &[f64],
    log: &RegressionLog,
) -> ConfidenceCheck {
    let delta: Vec<f64> = ell.center.iter().zip(truth).map(|(a, b)| a - b).collect();
    let statistic = log.squared_error_sum_gram(&delta);
    ConfidenceCheck {
        statistic,
        radius: ell.radius,
        inside: statistic <= ell.radius,
    }
}

// ── Target values for value-targeted regression ─────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexSearch {
    /// Enumerate `{0,1}^S`; fails beyond [`EXACT_VERTEX_LIMIT`] states.
    Exact,
    /// Enumerate when `S <= EXACT_VERTEX_LIMIT`, coordinate ascent otherwise.
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetValue {
    /// Maximising vertex `V in {0,1}^S`.
    pub value: Vec<f64>,
    /// Bitmask of `value` (bit `s'` set when `V(s') = 1`) when `S <= 64`.
    pub mask: u64,
    /// `min(1, raw)`.
    pub bonus: f64,
    pub raw: f64,
    pub exact: bool,
}

/// `V_max = argmax_V width(sum_s' psi(s,a,s') V(s'))` over `V in [0,1]^S`.
///
/// The width is a norm of an affine function of `V`, so the maximum over
/// the cube is attained at a vertex. Ties go to the lowest bitmask.
pub fn select_target_value(
    ell: &ConfidenceEllipsoid,
    features: &TransitionFeatures,
    s: usize,
    a: usize,
    search: VertexSearch,
) -> Result<TargetValue> {
    let n = features.num_states();
    let gram = successor_gram(ell, features, s, a);
    let scale = 2.0 * ell.radius().sqrt();
    if n <= EXACT_VERTEX_LIMIT {
        let quads = vertex_quadratic_forms(&gram, n);
        let (mut best_mask, mut best) = (0usize, quads[0]);
        for (mask, q) in quads.iter().enumerate().skip(1) {
            if *q > best {
                best = *q;
                best_mask = mask;
            }
        }
        let raw = scale * best.max(0.0).sqrt();
        return Ok(TargetValue {
            value: vertex(best_mask as u32, n),
            mask: best_mask as u64,
            bonus: raw.min(1.0),
            raw,
            exact: true,
        });
    }
    if search == VertexSearch::Exact {
        return Err(PbrlError::VertexEnumerationCapExceeded { num_states: n });
    }
    let (value, best) = coordinate_ascent(&gram, n, (s * features.num_actions() + a) as u64);
    let raw = scale * best.max(0.0).sqrt();
    let mask = value
        .iter()
        .take(64)
        .enumerate()
        .filter(|(_, v)| **v > 0.5)
        .fold(0u64, |m, (i, _)| m | (1 << i));
    Ok(TargetValue {
        value,
        mask,
        bonus: raw.min(1.0),
        raw,
        exact: false,
    })
}

/// `G[i][j] = psi(s,a,i)^T A^{-1} psi(s,a,j)`, so `||x_V||^2_{A^-1} = V^T G V`.
fn successor_gram(
    ell: &ConfidenceEllipsoid,
    features: &TransitionFeatures,
    s: usize,
    a: usize,
) -> Vec<Vec<f64>> {
    let n = features.num_states();
    let d = features.dim();
    let inv = ell.inverse();
    let projected: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let psi = features.psi_at(s, a, j);
            (0..d)
                .map(|r| (0..d).map(|c| inv[(r, c)] * psi[c]).sum())
                .collect()
        })
        .collect();
    (0..n)
        .map(|i| {
            let psi = features.psi_at(s, a, i);
            (0..n)
                .map(|j| psi.iter().zip(&projected[j]).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect()
}

/// Quadratic form `V^T G V` for every vertex, indexed by bitmask.
fn vertex_quadratic_forms(gram: &[Vec<f64>], n: usize) -> Vec<f64> {
    let total = 1usize << n;
    let mut quads = vec![0.0; total];
    for mask in 1..total {
        let k = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        let mut cross = 0.0;
        let mut bits = rest;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            cross += gram[k][j];
            bits &= bits - 1;
        }
        quads[mask] = quads[rest] + 2.0 * cross + gram[k][k];
    }
    quads
}

fn quad(gram: &[Vec<f64>], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, vi) in v.iter().enumerate() {
        if *vi != 0.0 {
            for (j, vj) in v.iter().enumerate() {
                acc += vi * vj * gram[i][j];
            }
        }
    }
    acc
}

/// Greedy single-coordinate flips from several starts.
fn coordinate_ascent(gram: &[Vec<f64>], n: usize, seed: u64) -> (Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_v = vec![0.0; n];
    let mut best = 0.0;
    for restart in 0..HEURISTIC_RESTARTS {
        let mut v: Vec<f64> = match restart {
            0 => vec![1.0; n],
            _ => (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 }).collect(),
        };
        let mut current = quad(gram, &v);
        loop {
            let mut best_flip = None;
            let mut best_gain = 1e-15;
            for k in 0..n {
                // Change in V^T G V from flipping coordinate k.
                let sign = if v[k] > 0.5 { -1.0 } else { 1.0 };
                let cross: f64 = (0..n).filter(|&j| j != k).map(|j| gram[k][j] * v[j]).sum();
                let gain = sign * 2.0 * cross + sign * gram[k][k];
                if gain > best_gain {
                    best_gain = gain;
                    best_flip = Some(k);
                }
            }
            match best_flip {
                Some(k) => {
                    v[k] = 1.0 - v[k];
                    current += best_gain;
                }
                None => break,
            }
        }
        let exact = quad(gram, &v);
        debug_assert!((exact - current).abs() < 1e-8 * (1.0 + exact.abs()));
        if exact > best {
            best = exact;
            best_v = v;
        }
    }
    (best_v, best)
}

// ── Confidence radius schedule ──────────────────────────────────────────

/// Model of the covering number `N(F, eps, ||.||_inf)` of a function class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CoveringModel {
    /// Parameter-box cover of `{x -> x^T theta : ||x|| <= L, ||theta|| <= S}`:
    /// `N(eps) = (1 + 2 L S / eps)^d`.
    AnalyticLinear {
        dim: usize,
        feature_bound: f64,
        param_bound: f64,
    },
    /// A fixed covering number, independent of the resolution.
    Explicit { value: f64 },
}

impl CoveringModel {
    pub fn log_covering(&self, eps: f64) -> f64 {
        match self {
            CoveringModel::AnalyticLinear {
                dim,
                feature_bound,
                param_bound,
            } => *dim as f64 * (1.0 + 2.0 * feature_bound * param_bound / eps).ln(),
            CoveringModel::Explicit { value } => value.ln(),
        }
    }
}

/// How the covering resolution depends on the stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    /// `eps = 1/K` for every stream (pairwise and once-per-episode agents).
    PerEpisode,
    /// `eps = 1/(K n^2)` for preferences and `1/(K n)` for transitions
    /// (n-wise comparison agent).
    NWise,
}

/// `beta = c_beta * 8 log(2 K N(F, eps) / delta)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub episodes: usize,
    pub delta: f64,
    pub covering: CoveringModel,
    pub scale: f64,
    pub comparisons: usize,
    pub resolution: Resolution,
}

impl BetaSchedule {
    pub fn new(
        episodes: usize,
        delta: f64,
        covering: CoveringModel,
        scale: f64,
        comparisons: usize,
        resolution: Resolution,
    ) -> Result<Self> {
        if episodes == 0 {
            return Err(PbrlError::InvalidArgument("K must be at least 1".into()));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(PbrlError::InvalidArgument(format!("delta must lie in (0,1), got {delta}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(PbrlError::InvalidArgument(format!("c_beta must be positive, got {scale}")));
        }
        if comparisons < 2 {
            return Err(PbrlError::InvalidArgument("n must be at least 2".into()));
        }
        match &covering {
            CoveringModel::AnalyticLinear {
                dim,
                feature_bound,
                param_bound,
            } => {
                if *dim == 0 || !(*feature_bound >= 0.0) || !(*param_bound >= 0.0) {
                    return Err(PbrlError::InvalidArgument("invalid covering parameters".into()));
                }
            }
            CoveringModel::Explicit { value } => {
                if !(*value >= 1.0) {
                    return Err(PbrlError::InvalidArgument(format!(
                        "covering number must be at least 1, got {value}"
                    )));
                }
            }
        }
        let schedule = Self {
            episodes,
            delta,
            covering,
            scale,
            comparisons,
            resolution,
        };
        for stream in [Stream::Preference, Stream::Transition, Stream::Feedback] {
            let beta = schedule.beta(stream);
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(PbrlError::InvalidArgument(format!(
                    "degenerate confidence radius {beta} for {stream:?}"
                )));
            }
        }
        Ok(schedule)
    }

    pub fn resolution_for(&self, stream: Stream) -> f64 {
        let k = self.episodes as f64;
        let n = self.comparisons as f64;
        match (self.resolution, stream) {
            (Resolution::NWise, Stream::Preference) => 1.0 / (k * n * n),
            (Resolution::NWise, Stream::Transition) => 1.0 / (k * n),
            _ => 1.0 / k,
        }
    }

    pub fn beta(&self, stream: Stream) -> f64 {
        let eps = self.resolution_for(stream);
        let log_term = (2.0 * self.episodes as f64).ln() + self.covering.log_covering(eps) - self.delta.ln();
        self.scale * 8.0 * log_term
    }
}

/// Free-function form of [`BetaSchedule::beta`].
pub fn beta_value(schedule: &BetaSchedule, stream: Stream) -> f64 {
    schedule.beta(stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_with(rows: &[(Vec<f64>, f64)]) -> RegressionLog {
        let mut log = RegressionLog::new(Stream::Feedback, rows[0].0.len(), 0.0);
        for (i, (x, y)) in rows.iter().enumerate() {
            log.push(i, x.clone(), *y).unwrap();
        }
        log
    }

    #[test]
    fn empty_log_fits_zero() {
        let log = RegressionLog::new(Stream::Transition, 3, 0.0);
        let theta = fit_least_squares(&log, 1.0).unwrap();
        assert_eq!(theta.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_sample_ridge() {
        let log = log_with(&[(vec![1.0, 0.0], 1.0)]);
        let theta = fit_least_squares(&log, 1.0).unwrap();
        assert!((theta[0] - 0.5).abs() < 1e-15 && theta[1] == 0.0);
    }

    #[test]
    fn non_positive_ridge_is_rejected() {
        let log = log_with(&[(vec![1.0], 1.0)]);
        assert!(fit_least_squares(&log, 0.0).is_err());
    }

    #[test]
    fn targets_outside_unit_interval_are_rejected() {
        let mut log = RegressionLog::new(Stream::Preference, 1, 0.5);
        assert!(log.push(0, vec![1.0], 1.5).is_err());
        assert!(log.push(0, vec![f64::NAN], 0.5).is_err());
    }

    #[test]
    fn width_examples() {
        let log = RegressionLog::new(Stream::Preference, 2, 0.5);
        let ell = ConfidenceEllipsoid::fit(&log, 1.0, 0.04).unwrap();
        assert_eq!(ell.width(&[0.0, 0.0]), 0.0);
        assert!((ell.width(&[1.0, 0.0]) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn quadrupling_radius_doubles_raw_width() {
        let log = log_with(&[(vec![0.3, 0.2], 1.0), (vec![-0.1, 0.5], 0.0)]);
        let ell = ConfidenceEllipsoid::fit(&log, 1.0, 2.0).unwrap();
        let x = [0.7, -0.4];
        let w = ell.raw_width(&x);
        let w4 = ell.with_radius(8.0).raw_width(&x);
        assert!((w4 - 2.0 * w).abs() < 1e-14);
    }

    #[test]
    fn target_value_single_direction() {
        // x(V) = V(0) * (1, 0): only V = (1, 0) has positive width.
        let psi = vec![1.0, 0.0, 0.0, 0.0];
        let features = TransitionFeatures::new(2, 1, 2, [psi.clone(), psi].concat()).unwrap();
        let log = RegressionLog::new(Stream::Transition, 2, 0.0);
        let ell = ConfidenceEllipsoid::fit(&log, 1.0, 0.25).unwrap();
        let t = select_target_value(&ell, &features, 0, 0, VertexSearch::Exact).unwrap();
        assert_eq!(t.value, vec![1.0, 0.0]);
        assert!((t.bonus - 1.0).abs() < 1e-15);
        let zero = select_target_value(&ell.with_radius(0.0), &features, 0, 0, VertexSearch::Exact).unwrap();
        assert_eq!(zero.bonus, 0.0);
    }

    #[test]
    fn large_state_space_needs_heuristic() {
        let n = EXACT_VERTEX_LIMIT + 1;
        // psi(s, a, s') = 0.2 e_{s'} for every (s, a).
        let block: Vec<f64> = (0..n * n).map(|i| if i % (n + 1) == 0 { 0.2 } else { 0.0 }).collect();
        let features = TransitionFeatures::new(n, 1, n, block.repeat(n)).unwrap();
        let log = RegressionLog::new(Stream::Transition, n, 0.0);
        let ell = ConfidenceEllipsoid::fit(&log, 1.0, 1.0).unwrap();
        let err = select_target_value(&ell, &features, 0, 0, VertexSearch::Exact).unwrap_err();
        assert!(matches!(err, PbrlError::VertexEnumerationCapExceeded { .. }));
        let t = select_target_value(&ell, &features, 0, 0, VertexSearch::Auto).unwrap();
        assert!(!t.exact);
        // Identity-like psi with a fresh ellipsoid: all-ones is optimal.
        assert!(t.value.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn beta_explicit_covering() {
        let s = BetaSchedule::new(
            100,
            0.05,
            CoveringModel::Explicit { value: 1000.0 },
            1.0,
            2,
            Resolution::PerEpisode,
        )
        .unwrap();
        let expected = 8.0 * (4.0e6f64).ln();
        assert!((s.beta(Stream::Preference) - expected).abs() < 1e-9);
        assert!((expected - 121.61).abs() < 0.01);
    }

    #[test]
    fn degenerate_schedules_are_rejected() {
        let cover = CoveringModel::Explicit { value: 1000.0 };
        assert!(BetaSchedule::new(100, 0.05, cover.clone(), 0.0, 2, Resolution::PerEpisode).is_err());
        // N = delta / (2K) makes the log argument 1.
        let tiny = CoveringModel::Explicit { value: 0.05 / 200.0 };
        assert!(BetaSchedule::new(100, 0.05, tiny, 1.0, 2, Resolution::PerEpisode).is_err());
    }

    #[test]
    fn beta_grows_with_k_and_confidence() {
        let cover = CoveringModel::AnalyticLinear {
            dim: 3,
            feature_bound: 1.0,
            param_bound: 0.5,
        };
        let mk = |k, delta| {
            BetaSchedule::new(k, delta, cover.clone(), 1.0, 2, Resolution::PerEpisode)
                .unwrap()
                .beta(Stream::Preference)
        };
        assert!(mk(200, 0.05) > mk(100, 0.05));
        assert!(mk(100, 0.01) > mk(100, 0.05));
    }

    #[test]
    fn nwise_resolution() {
        let cover = CoveringModel::AnalyticLinear {
            dim: 1,
            feature_bound: 1.0,
            param_bound: 1.0,
        };
        let s = BetaSchedule::new(10, 0.1, cover, 1.0, 4, Resolution::NWise).unwrap();
        assert!((s.resolution_for(Stream::Preference) - 1.0 / 160.0).abs() < 1e-15);
        assert!((s.resolution_for(Stream::Transition) - 1.0 / 40.0).abs() < 1e-15);
        assert!(s.beta(Stream::Preference) > s.beta(Stream::Transition));
    }

    #[test]
    fn membership_test_examples() {
        let log = log_with(&[(vec![1.0, 0.0], 1.0), (vec![0.0, 1.0], 0.0)]);
        let ell = ConfidenceEllipsoid::fit(&log, 1.0, 1.0).unwrap();
        let center = ell.center_vec();
        assert!(model_in_confidence_set(&ell, &center, &log).inside);
        let zero_radius = ell.with_radius(0.0);
        assert!(!model_in_confidence_set(&zero_radius, &[0.9, 0.1], &log).inside);
        let a = model_in_confidence_set(&ell, &[0.2, 0.7], &log);
        let b = model_in_confidence_set_gram(&ell, &[0.2, 0.7], &log);
        assert!((a.statistic - b.statistic).abs() < 1e-12);
    }
}
