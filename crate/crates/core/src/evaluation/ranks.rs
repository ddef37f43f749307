use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Largest combined sample size for the exact null distribution.
pub const EXACT_MAX_N: usize = 20;

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Rank sum of the first sample.
    pub statistic: f64,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Two-sided Wilcoxon rank-sum test.
///
/// Exact when the combined size is at most [`EXACT_MAX_N`] and there are no
/// ties; otherwise the normal approximation with tie and continuity corrections.
pub fn wilcoxon_ranksum(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.is_empty() || y.is_empty() {
        return invalid("rank-sum test needs two non-empty samples");
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return invalid("rank-sum test input contains NaN");
    }
    let all: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = average_ranks(&all);
    let (n1, n2) = (x.len(), y.len());
    let n = n1 + n2;
    let w: f64 = ranks[..n1].iter().sum();

    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }

    if n <= EXACT_MAX_N && tie_term == 0.0 {
        // Ranks are integers here, so the rank sum is exact.
        let counts = rank_sum_counts(n1, n);
        let total: f64 = counts.iter().sum();
        let w = w.round() as usize;
        let lower: f64 = counts[..=w].iter().sum::<f64>() / total;
        let upper: f64 = counts[w..].iter().sum::<f64>() / total;
        return Ok(WilcoxonResult {
            statistic: w as f64,
            p_value: (2.0 * lower.min(upper)).min(1.0),
            method: WilcoxonMethod::Exact,
        });
    }

    let (f1, f2, fnn) = (n1 as f64, n2 as f64, n as f64);
    let mean = f1 * (fnn + 1.0) / 2.0;
    let var = f1 * f2 / 12.0 * ((fnn + 1.0) - tie_term / (fnn * (fnn - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
        libm::erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(WilcoxonResult {
        statistic: w,
        p_value,
        method: WilcoxonMethod::Normal,
    })
}

pub fn wilcoxon_ranksum_p(x: &[f64], y: &[f64]) -> Result<f64> {
    wilcoxon_ranksum(x, y).map(|r| r.p_value)
}

/// Number of `k`-subsets of `{1..n}` with each possible sum, indexed by sum.
fn rank_sum_counts(k: usize, n: usize) -> Vec<f64> {
    let max_sum = n * (n + 1) / 2;
    // dp[j][s]: subsets of size j with sum s among the ranks seen so far.
    let mut dp = vec![vec![0.0f64; max_sum + 1]; k + 1];
    dp[0][0] = 1.0;
    for r in 1..=n {
        for j in (1..=k.min(r)).rev() {
            for s in (r..=max_sum).rev() {
                dp[j][s] += dp[j - 1][s - r];
            }
        }
    }
    dp.swap_remove(k)
}
