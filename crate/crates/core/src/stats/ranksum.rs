//! Wilcoxon rank-sum (Mann-Whitney) test.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Samples with `n1 + n2` up to this size get the exact null distribution.
pub const EXACT_MAX_TOTAL: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

/// Which null distribution to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MethodChoice {
    /// Exact when `n1 + n2 <= EXACT_MAX_TOTAL`, normal otherwise.
    #[default]
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// Mann-Whitney `U` of the first sample (midranks for ties).
    pub statistic: f64,
    pub p_two_sided: f64,
    /// `P(U <= u)` under the null.
    pub p_lower: f64,
    /// `P(U >= u)` under the null.
    pub p_upper: f64,
    pub method: TestMethod,
    pub n1: usize,
    pub n2: usize,
    pub tie_correction_applied: bool,
}

pub fn ranksum_test(a: &[f64], b: &[f64]) -> Result<RankSumResult> {
    ranksum_test_with(a, b, MethodChoice::Auto)
}

pub fn ranksum_test_with(a: &[f64], b: &[f64], choice: MethodChoice) -> Result<RankSumResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Stats(
            "rank-sum test needs two non-empty samples".into(),
        ));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::Stats("rank-sum test got a NaN".into()));
    }
    let (n1, n2) = (a.len(), b.len());
    let (scores, tie_groups) = doubled_midranks(a, b);
    let w2: u64 = scores[..n1].iter().sum();
    let statistic = w2 as f64 / 2.0 - (n1 * (n1 + 1)) as f64 / 2.0;
    let has_ties = tie_groups.iter().any(|&t| t > 1);

    let exact = match choice {
        MethodChoice::Auto => n1 + n2 <= EXACT_MAX_TOTAL,
        MethodChoice::Exact => true,
        MethodChoice::Normal => false,
    };
    let (p_lower, p_upper, method) = if exact {
        let (le, ge, total) = exact_tails(&scores, n1, w2)?;
        (le / total, ge / total, TestMethod::Exact)
    } else {
        let (lo, hi) = normal_tails(statistic, n1, n2, &tie_groups);
        (lo, hi, TestMethod::NormalApprox)
    };
    let p_two_sided = if method == TestMethod::NormalApprox {
        normal_two_sided(statistic, n1, n2, &tie_groups)
    } else {
        (2.0 * p_lower.min(p_upper)).min(1.0)
    };
    Ok(RankSumResult {
        statistic,
        p_two_sided,
        p_lower,
        p_upper,
        method,
        n1,
        n2,
        tie_correction_applied: method == TestMethod::NormalApprox && has_ties,
    })
}

/// Twice the midrank of every observation (a first, then b), and the sizes
/// of the tie groups.
fn doubled_midranks(a: &[f64], b: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.sort_by(|&i, &j| all[i].total_cmp(&all[j]));
    let mut scores = vec![0u64; all.len()];
    let mut groups = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && all[order[end + 1]] == all[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end+1, midrank (start + end + 2) / 2
        for &i in &order[start..=end] {
            scores[i] = (start + end + 2) as u64;
        }
        groups.push(end - start + 1);
        start = end + 1;
    }
    (scores, groups)
}

/// Number of size-`n1` subsets with doubled score sum `<= w2` and `>= w2`,
/// and the total count, by dynamic programming over the observations.
fn exact_tails(scores: &[u64], n1: usize, w2: u64) -> Result<(f64, f64, f64)> {
    let total_score: u64 = scores.iter().sum();
    let smax = total_score as usize;
    // dp[j * (smax + 1) + s]: subsets of size j with sum s
    let width = smax + 1;
    let mut dp = vec![0u64; (n1 + 1) * width];
    dp[0] = 1;
    for (i, &sc) in scores.iter().enumerate() {
        let sc = sc as usize;
        for j in (1..=n1.min(i + 1)).rev() {
            let (lower, upper) = dp.split_at_mut(j * width);
            let prev = &lower[(j - 1) * width..];
            let cur = &mut upper[..width];
            for s in (sc..width).rev() {
                let add = prev[s - sc];
                if add != 0 {
                    cur[s] = cur[s].checked_add(add).ok_or_else(|| {
                        Error::Stats(
                            "exact rank-sum distribution overflows; use the normal approximation"
                                .into(),
                        )
                    })?;
                }
            }
        }
    }
    let row = &dp[n1 * width..];
    let w = w2 as usize;
    let le: u64 = row[..=w].iter().sum();
    let ge: u64 = row[w..].iter().sum();
    let total: u64 = row.iter().sum();
    Ok((le as f64, ge as f64, total as f64))
}

fn normal_sigma(n1: usize, n2: usize, tie_groups: &[usize]) -> f64 {
    let (f1, f2) = (n1 as f64, n2 as f64);
    let n = f1 + f2;
    let ties: f64 = tie_groups.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = f1 * f2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    var.max(0.0).sqrt()
}

fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

fn normal_tails(u: f64, n1: usize, n2: usize, tie_groups: &[usize]) -> (f64, f64) {
    let sigma = normal_sigma(n1, n2, tie_groups);
    if sigma == 0.0 {
        return (1.0, 1.0);
    }
    let mu = (n1 * n2) as f64 / 2.0;
    let lower = (1.0 - upper_tail((u + 0.5 - mu) / sigma)).min(1.0);
    let upper = upper_tail((u - 0.5 - mu) / sigma).min(1.0);
    (lower, upper)
}

/// Continuity-corrected two-sided p, symmetric in the two samples.
fn normal_two_sided(u: f64, n1: usize, n2: usize, tie_groups: &[usize]) -> f64 {
    let sigma = normal_sigma(n1, n2, tie_groups);
    if sigma == 0.0 {
        return 1.0;
    }
    let mu = (n1 * n2) as f64 / 2.0;
    let z = ((u - mu).abs() - 0.5) / sigma;
    (2.0 * upper_tail(z)).min(1.0)
}
