//! Brute-force complexity measures for small finite function classes.
//!
//! These are documentation-grade estimators of the covering number and the
//! Eluder dimension. Agents never call them; they exist so that observed
//! regret can be related to the complexity of concrete desk-scale classes.

use serde::{Deserialize, Serialize};

use crate::error::{PbrlError, Result};

/// Largest domain for the exhaustive Eluder search.
pub const ELUDER_MAX_DOMAIN: usize = 16;
/// Largest class for which the greedy cover is checked for minimality.
pub const EXACT_COVER_MAX_FUNCTIONS: usize = 20;

/// Functions on a finite domain `{0, .., n-1}` given as value tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClassRepr", into = "ClassRepr")]
pub struct FiniteFunctionClass {
    domain_size: usize,
    functions: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ClassRepr {
    functions: Vec<Vec<f64>>,
}

impl TryFrom<ClassRepr> for FiniteFunctionClass {
    type Error = PbrlError;
    fn try_from(r: ClassRepr) -> Result<Self> {
        Self::new(r.functions)
    }
}

impl From<FiniteFunctionClass> for ClassRepr {
    fn from(c: FiniteFunctionClass) -> Self {
        ClassRepr { functions: c.functions }
    }
}

impl FiniteFunctionClass {
    pub fn new(functions: Vec<Vec<f64>>) -> Result<Self> {
        let domain_size = functions.first().map(|f| f.len()).unwrap_or(0);
        if functions.is_empty() {
            return Err(PbrlError::InvalidArgument("function class is empty".into()));
        }
        if functions.iter().any(|f| f.len() != domain_size) {
            return Err(PbrlError::InvalidArgument("value tables differ in length".into()));
        }
        if functions.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(PbrlError::InvalidArgument("function values must lie in [0,1]".into()));
        }
        Ok(Self { domain_size, functions })
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[Vec<f64>] {
        &self.functions
    }

    pub fn sup_distance(&self, i: usize, j: usize) -> f64 {
        self.functions[i]
            .iter()
            .zip(&self.functions[j])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    /// Size of the greedy cover (an upper bound on the covering number).
    pub greedy: usize,
    /// Indices of the greedy centres.
    pub centers: Vec<usize>,
    /// Smallest cover found by exhaustive search, when it was attempted.
    pub minimum: Option<usize>,
}

impl CoverReport {
    /// Best known value: the exhaustive minimum when available.
    pub fn value(&self) -> usize {
        self.minimum.unwrap_or(self.greedy)
    }
}

/// Sup-norm `eps`-cover of `class` with centres drawn from the class.
///
/// Greedy set cover picks the centre whose ball holds the most uncovered
/// functions (lowest index on ties). For classes of at most
/// [`EXACT_COVER_MAX_FUNCTIONS`] functions every smaller subset is then
/// searched to certify or improve the greedy size.
pub fn covering_number(class: &FiniteFunctionClass, eps: f64) -> Result<CoverReport> {
    if !(eps > 0.0) {
        return Err(PbrlError::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let n = class.len();
    let balls: Vec<Vec<usize>> = (0..n)
        .map(|c| (0..n).filter(|&f| class.sup_distance(c, f) <= eps).collect())
        .collect();

    let mut centers = Vec::new();
    let mut covered = vec![false; n];
    let mut remaining = n;
    while remaining > 0 {
        let mut best = (0, 0);
        for (c, ball) in balls.iter().enumerate() {
            let gain = ball.iter().filter(|&&f| !covered[f]).count();
            if gain > best.1 {
                best = (c, gain);
            }
        }
        centers.push(best.0);
        for &f in &balls[best.0] {
            if !covered[f] {
                covered[f] = true;
                remaining -= 1;
            }
        }
    }
    let greedy = centers.len();

    let minimum = (n <= EXACT_COVER_MAX_FUNCTIONS).then(|| {
        let masks: Vec<u64> = balls.iter().map(|b| b.iter().fold(0u64, |m, &f| m | (1 << f))).collect();
        let all = (1u64 << n) - 1;
        (1..greedy)
            .find(|&size| subsets_cover(&masks, all, size))
            .unwrap_or(greedy)
    });
    Ok(CoverReport {
        greedy,
        centers,
        minimum,
    })
}

fn subsets_cover(balls: &[u64], all: u64, size: usize) -> bool {
    fn go(balls: &[u64], all: u64, start: usize, left: usize, acc: u64) -> bool {
        if acc == all {
            return true;
        }
        if left == 0 {
            return false;
        }
        (start..balls.len()).any(|c| go(balls, all, c + 1, left - 1, acc | balls[c]))
    }
    go(balls, all, 0, size, 0)
}

/// Length of the longest sequence of distinct domain points in which every
/// point is `alpha'`-independent of its predecessors for one common
/// `alpha' >= alpha`.
///
/// A point `x` is `alpha'`-independent of `x_1..x_k` when some `f1, f2` in
/// the class satisfy `sum_i (f1(x_i) - f2(x_i))^2 <= alpha'^2` and the
/// one-sided gap `f1(x) - f2(x) >= alpha'`.
pub fn eluder_dimension(class: &FiniteFunctionClass, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0) {
        return Err(PbrlError::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let size = class.domain_size();
    if size > ELUDER_MAX_DOMAIN {
        return Err(PbrlError::DomainTooLarge {
            size,
            max: ELUDER_MAX_DOMAIN,
        });
    }
    let f = class.functions();
    let mut diffs: Vec<Vec<f64>> = Vec::new();
    for f1 in f {
        for f2 in f {
            let d: Vec<f64> = f1.iter().zip(f2).map(|(a, b)| a - b).collect();
            if d.iter().any(|v| *v > 0.0) {
                diffs.push(d);
            }
        }
    }
    // The valid alpha' for a fixed sequence form a finite union of closed
    // intervals whose right ends are gaps f1(x) - f2(x), so those gaps are
    // the only candidates that need checking.
    let mut candidates: Vec<f64> = diffs.iter().flatten().copied().filter(|v| *v >= alpha).collect();
    candidates.sort_by(|a, b| b.total_cmp(a));
    candidates.dedup();

    let mut best = 0;
    for a in candidates {
        best = best.max(longest_sequence(&diffs, size, a));
        if best == size {
            break;
        }
    }
    Ok(best)
}

fn longest_sequence(diffs: &[Vec<f64>], size: usize, alpha: f64) -> usize {
    let budget = alpha * alpha;
    let mut memo: Vec<i32> = vec![-1; 1 << size];
    fn go(mask: usize, diffs: &[Vec<f64>], size: usize, alpha: f64, budget: f64, memo: &mut [i32]) -> usize {
        if memo[mask] >= 0 {
            return memo[mask] as usize;
        }
        // Pairs still inside the squared-error budget on the prefix.
        let live: Vec<&Vec<f64>> = diffs
            .iter()
            .filter(|d| {
                (0..size)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| d[i] * d[i])
                    .sum::<f64>()
                    <= budget
            })
            .collect();
        let mut best = 0;
        for x in 0..size {
            if mask & (1 << x) != 0 {
                continue;
            }
            if live.iter().any(|d| d[x] >= alpha) {
                best = best.max(1 + go(mask | (1 << x), diffs, size, alpha, budget, memo));
            }
        }
        memo[mask] = best as i32;
        best
    }
    go(0, diffs, size, alpha, budget, &mut memo)
}
