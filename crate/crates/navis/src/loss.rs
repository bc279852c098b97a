//! Training objectives and the ranking metric: cross-entropy, a pairwise
//! rank loss weighted by NDCG impact, hinge margin regularization, and
//! NDCG@k.
//!
//! Sign convention: the rank loss is the *negated* sum of
//! `log2(sigmoid(sigma * (s_i - s_j)))` terms, so it is non-negative and
//! minimization improves the ranking. Gains use `2^y - 1` while `maxDCG`
//! uses linear gains by default; a consistent exponential-gain `maxDCG`
//! is available via [`RankOptions::exponential_max_dcg`].

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("length mismatch: scores {scores}, targets {targets}")]
    LengthMismatch { scores: usize, targets: usize },
    #[error("non-finite input entry")]
    NonFinite,
}

const LN2: f64 = std::f64::consts::LN_2;

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// `log2(sigmoid(u))`, stable for large negative `u`.
fn log2_sigmoid(u: f64) -> f64 {
    // ln sigmoid(u) = -softplus(-u)
    let softplus = if -u > 30.0 { -u } else { (1.0 + (-u).exp()).ln() };
    -softplus / LN2
}

fn check(s: &[f64], y: &[f64]) -> Result<(), LossError> {
    if s.len() != y.len() {
        return Err(LossError::LengthMismatch {
            scores: s.len(),
            targets: y.len(),
        });
    }
    if s.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(LossError::NonFinite);
    }
    Ok(())
}

/// Indices sorted by score descending, ties broken by ascending index.
pub fn rank_permutation(s: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).expect("finite scores").then(a.cmp(&b)));
    idx
}

/// Cross-entropy of targets against the softmax of the scores.
pub fn cross_entropy(s: &[f64], y: &[f64]) -> Result<f64, LossError> {
    check(s, y)?;
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = s.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    Ok(y.iter().zip(s).map(|(&yi, &si)| -yi * (si - log_z)).sum())
}

/// Cross-entropy value and gradient w.r.t. the scores:
/// `(sum y) * softmax(s) - y`.
pub fn cross_entropy_with_grad(s: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>), LossError> {
    let value = cross_entropy(s, y)?;
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = s.iter().map(|&v| (v - max).exp()).sum();
    let y_sum: f64 = y.iter().sum();
    let grad = s
        .iter()
        .zip(y)
        .map(|(&si, &yi)| y_sum * (si - max).exp() / z - yi)
        .collect();
    Ok((value, grad))
}

/// Options shaping the pairwise rank loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankOptions {
    /// Shape scalar inside the pairwise sigmoid.
    pub sigma_shape: f64,
    /// A pair contributes only when at least one member ranks within the
    /// top `top_k` of the predicted ordering.
    pub top_k: usize,
    /// Compute `maxDCG` with `2^y - 1` gains instead of linear gains.
    pub exponential_max_dcg: bool,
}

impl Default for RankOptions {
    fn default() -> Self {
        Self {
            sigma_shape: 1.0,
            top_k: 20,
            exponential_max_dcg: false,
        }
    }
}

/// Per-query ranking context: the predicted permutation, normalized gains
/// per position, discounts, and `maxDCG`.
#[derive(Debug, Clone)]
pub struct RankingContext {
    /// Candidate indices sorted by predicted score descending.
    pub permutation: Vec<usize>,
    /// `A_{pi_i} = (2^{y_{pi_i}} - 1) / maxDCG` per rank position.
    pub gains: Vec<f64>,
    /// `maxDCG` over the full (untruncated) list; 0 when `y` is all-zero.
    pub max_dcg: f64,
    pub options: RankOptions,
}

impl RankingContext {
    pub fn build(s: &[f64], y: &[f64], options: RankOptions) -> Result<Self, LossError> {
        check(s, y)?;
        let permutation = rank_permutation(s);
        let mut y_sorted: Vec<f64> = y.to_vec();
        y_sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite targets"));
        let max_dcg: f64 = y_sorted
            .iter()
            .enumerate()
            .map(|(i, &yi)| {
                let gain = if options.exponential_max_dcg {
                    yi.exp2() - 1.0
                } else {
                    yi
                };
                gain / ((i + 2) as f64).log2()
            })
            .sum();
        let gains = if max_dcg > 0.0 {
            permutation
                .iter()
                .map(|&idx| (y[idx].exp2() - 1.0) / max_dcg)
                .collect()
        } else {
            vec![0.0; y.len()]
        };
        Ok(Self {
            permutation,
            gains,
            max_dcg,
            options,
        })
    }

    /// Discount at 1-based rank `i`: `log2(1 + i)`.
    fn discount(i: usize) -> f64 {
        ((1 + i) as f64).log2()
    }

    /// `delta_ij = |1/D_|i-j| - 1/D_(|i-j|+1)|` for rank positions `i != j`.
    fn delta(i: usize, j: usize) -> f64 {
        let gap = i.abs_diff(j);
        (1.0 / Self::discount(gap) - 1.0 / Self::discount(gap + 1)).abs()
    }

    /// Visits every contributing pair of rank positions `(i, j)` with
    /// `y_{pi_i} > y_{pi_j}` and at least one member in the top-k.
    fn for_each_pair(&self, y: &[f64], mut f: impl FnMut(usize, usize, f64)) {
        let n = self.permutation.len();
        for i in 0..n {
            for j in 0..n {
                if i == j || i.min(j) >= self.options.top_k {
                    continue;
                }
                let (yi, yj) = (y[self.permutation[i]], y[self.permutation[j]]);
                if yi > yj {
                    let weight = Self::delta(i, j) * (self.gains[i] - self.gains[j]).abs();
                    f(i, j, weight);
                }
            }
        }
    }
}

/// Pairwise rank loss. Defined as 0 when `y` is all-zero (maxDCG = 0) or
/// has no strictly ordered pair.
pub fn lambda_loss(s: &[f64], y: &[f64], ctx: &RankingContext) -> Result<f64, LossError> {
    check(s, y)?;
    if ctx.max_dcg <= 0.0 {
        return Ok(0.0);
    }
    let sigma = ctx.options.sigma_shape;
    let mut total = 0.0;
    ctx.for_each_pair(y, |i, j, weight| {
        let diff = s[ctx.permutation[i]] - s[ctx.permutation[j]];
        total -= log2_sigmoid(sigma * diff) * weight;
    });
    Ok(total)
}

/// Hinge margin regularization over the same truncated pair set:
/// `sum max(0, -(s_i - s_j) + delta_margin)`.
pub fn margin_reg(
    s: &[f64],
    y: &[f64],
    ctx: &RankingContext,
    delta_margin: f64,
) -> Result<f64, LossError> {
    check(s, y)?;
    let mut total = 0.0;
    ctx.for_each_pair(y, |i, j, _| {
        let diff = s[ctx.permutation[i]] - s[ctx.permutation[j]];
        total += (delta_margin - diff).max(0.0);
    });
    Ok(total)
}

/// Rank loss plus margin regularization with unit weighting, and the
/// analytic gradient w.r.t. the scores over the same pair set.
pub fn total_loss(
    s: &[f64],
    y: &[f64],
    ctx: &RankingContext,
    delta_margin: f64,
) -> Result<(f64, Vec<f64>), LossError> {
    rank_loss_with_grad(s, y, ctx, Some(delta_margin))
}

/// Rank loss with an optional margin term; `None` gives the bare pairwise
/// loss used by the loss-ablation rows.
pub fn rank_loss_with_grad(
    s: &[f64],
    y: &[f64],
    ctx: &RankingContext,
    delta_margin: Option<f64>,
) -> Result<(f64, Vec<f64>), LossError> {
    check(s, y)?;
    let mut grad = vec![0.0; s.len()];
    if ctx.max_dcg <= 0.0 {
        return Ok((0.0, grad));
    }
    let sigma = ctx.options.sigma_shape;
    let mut value = 0.0;
    ctx.for_each_pair(y, |i, j, weight| {
        let hi = ctx.permutation[i];
        let lo = ctx.permutation[j];
        let diff = s[hi] - s[lo];
        value -= log2_sigmoid(sigma * diff) * weight;
        let slope = sigma / LN2 * (1.0 - sigmoid(sigma * diff)) * weight;
        grad[hi] -= slope;
        grad[lo] += slope;
        if let Some(margin) = delta_margin {
            let hinge = margin - diff;
            if hinge > 0.0 {
                value += hinge;
                grad[hi] -= 1.0;
                grad[lo] += 1.0;
            }
        }
    });
    Ok((value, grad))
}

/// NDCG truncated at rank `k` with linear gains and `log2(i + 1)`
/// discounts; ties in `s` break by ascending candidate index. Defined as 0
/// when `y` has no positive entry.
pub fn ndcg_at_k(s: &[f64], y: &[f64], k: usize) -> Result<f64, LossError> {
    check(s, y)?;
    if !y.iter().any(|&v| v > 0.0) {
        return Ok(0.0);
    }
    let perm = rank_permutation(s);
    let dcg: f64 = perm
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &idx)| y[idx] / ((i + 2) as f64).log2())
        .sum();
    let mut y_sorted = y.to_vec();
    y_sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite targets"));
    let ideal: f64 = y_sorted
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &yi)| yi / ((i + 2) as f64).log2())
        .sum();
    Ok(dcg / ideal)
}
